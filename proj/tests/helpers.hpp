#pragma once

#include <string>
#include <vector>

#include "goalrec/corpus.hpp"

namespace testing {

// Builds a session from tokens, interning them ("a:b" is a data command).
inline goalrec::Session session_of(goalrec::Vocabulary& vocab, const std::vector<std::string>& tokens) {
  goalrec::Session s;
  s.user = "u";
  for (const auto& t : tokens) s.commands.push_back(vocab.add_token(t));
  return s;
}

}  // namespace testing
