#pragma once

#include <stdexcept>
#include <string>

namespace polyest {

class InvalidArgument : public std::invalid_argument {
 public:
  explicit InvalidArgument(const std::string& what) : std::invalid_argument(what) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) {
    throw InvalidArgument(msg);
  }
}

}  // namespace polyest
