#pragma once

#include <string>
#include <vector>

namespace skillagent {

enum class Role { System, User, Assistant };

const char* role_name(Role r);
Role role_from_name(const std::string& name);

struct ChatTurn {
  Role role = Role::User;
  std::string content;

  bool operator==(const ChatTurn&) const = default;
};

using ChatHistory = std::vector<ChatTurn>;

}  // namespace skillagent
