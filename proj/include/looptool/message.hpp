#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "looptool/json_util.hpp"

namespace looptool {

enum class ChatRole { System, User, Assistant, Tool };

std::string_view to_string(ChatRole role);
ChatRole chat_role_from_string(std::string_view tag);

struct Message {
    ChatRole role;
    std::string text;

    bool operator==(const Message&) const = default;
};

using MessageList = std::vector<Message>;

// {"role": "...", "content": "..."}
Json to_json(const Message& message);
Message message_from_json(const Json& doc);
Json to_json(const MessageList& messages);
MessageList message_list_from_json(const Json& doc);

}  // namespace looptool
