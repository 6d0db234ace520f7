#pragma once

#include <string>
#include <vector>

namespace skillagent {

struct Passage {
  std::string doc_id;
  std::string title;
  std::string text;
  double score = 0.0;

  bool operator==(const Passage&) const = default;
};

}  // namespace skillagent
