#include "looptool/message.hpp"

#include "looptool/errors.hpp"

namespace looptool {

std::string_view to_string(ChatRole role) {
    switch (role) {
        case ChatRole::System: return "system";
        case ChatRole::User: return "user";
        case ChatRole::Assistant: return "assistant";
        case ChatRole::Tool: return "tool";
    }
    return "user";
}

ChatRole chat_role_from_string(std::string_view tag) {
    if (tag == "system") return ChatRole::System;
    if (tag == "user") return ChatRole::User;
    if (tag == "assistant") return ChatRole::Assistant;
    if (tag == "tool") return ChatRole::Tool;
    throw DataError("unknown message role \"" + std::string(tag) + "\"");
}

Json to_json(const Message& message) {
    return Json{{"role", to_string(message.role)}, {"content", message.text}};
}

Message message_from_json(const Json& doc) {
    if (!doc.is_object() || !doc.contains("role") || !doc.contains("content")) {
        throw DataError("message must be an object with role and content");
    }
    return {chat_role_from_string(doc.at("role").get<std::string>()),
            doc.at("content").get<std::string>()};
}

Json to_json(const MessageList& messages) {
    Json arr = Json::array();
    for (const auto& m : messages) arr.push_back(to_json(m));
    return arr;
}

MessageList message_list_from_json(const Json& doc) {
    if (!doc.is_array()) throw DataError("message list must be an array");
    MessageList out;
    out.reserve(doc.size());
    for (const auto& m : doc) out.push_back(message_from_json(m));
    return out;
}

}  // namespace looptool
