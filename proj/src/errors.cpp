#include "fedrec/errors.hpp"

namespace fedrec {

ParseError::ParseError(std::size_t line, const std::string& what)
    : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

ClientAbortError::ClientAbortError(int round, std::size_t user, const std::string& what)
    : Error("round " + std::to_string(round) + ", user " + std::to_string(user) + ": " + what),
      round_(round),
      user_(user) {}

}  // namespace fedrec
