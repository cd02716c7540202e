#include <istream>
#include <ostream>
#include <sstream>

#include "goalrec/corpus.hpp"
#include "goalrec/error.hpp"

namespace goalrec {

Vocabulary::Vocabulary() { intern(std::string(kUnknownToken), CommandKind::Software); }

Command Vocabulary::intern(std::string token, CommandKind kind) {
  if (auto it = index_.find(token); it != index_.end()) {
    if (kinds_[it->second] != kind) throw Error("command '" + token + "' used with both kinds");
    return {kind, it->second};
  }
  auto id = static_cast<CommandId>(tokens_.size());
  index_.emplace(token, id);
  tokens_.push_back(std::move(token));
  kinds_.push_back(kind);
  if (kind == CommandKind::Data) {
    slots_.push_back(static_cast<std::int64_t>(data_ids_.size()));
    data_ids_.push_back(id);
  } else {
    slots_.push_back(-1);
  }
  return {kind, id};
}

Command Vocabulary::add_software(std::string_view name) {
  if (name.empty()) throw Error("empty software command");
  if (name.find(':') != std::string_view::npos)
    throw Error("software command may not contain ':': " + std::string(name));
  if (name.find_first_of(" \t\r\n") != std::string_view::npos)
    throw Error("command token contains whitespace: " + std::string(name));
  return intern(std::string(name), CommandKind::Software);
}

Command Vocabulary::add_data(std::string_view cls, std::string_view variable) {
  if (cls.empty() || variable.empty()) throw Error("data command needs class and variable");
  if (cls.find(':') != std::string_view::npos)
    throw Error("data command class may not contain ':': " + std::string(cls));
  std::string token;
  token.reserve(cls.size() + variable.size() + 1);
  token.append(cls).append(":").append(variable);
  if (token.find_first_of(" \t\r\n") != std::string::npos)
    throw Error("command token contains whitespace: " + token);
  return intern(std::move(token), CommandKind::Data);
}

Command Vocabulary::add_token(std::string_view token) {
  auto colon = token.find(':');
  if (colon == std::string_view::npos) return add_software(token);
  return add_data(token.substr(0, colon), token.substr(colon + 1));
}

std::optional<Command> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return Command{kinds_[it->second], it->second};
}

Command Vocabulary::lookup(std::string_view token) const {
  return find(token).value_or(Command{CommandKind::Software, kUnknown});
}

Command Vocabulary::command(CommandId id) const { return {kinds_.at(id), id}; }

const std::string& Vocabulary::token(CommandId id) const { return tokens_.at(id); }

std::size_t Vocabulary::slot(CommandId id) const {
  auto s = slots_.at(id);
  if (s < 0) throw Error("'" + tokens_[id] + "' is not a data command");
  return static_cast<std::size_t>(s);
}

void Vocabulary::save(std::ostream& out) const {
  out << "goalrec-vocabulary 1 " << tokens_.size() << '\n';
  for (std::size_t i = 0; i < tokens_.size(); ++i)
    out << (kinds_[i] == CommandKind::Data ? "DC " : "SC ") << tokens_[i] << '\n';
}

Vocabulary Vocabulary::load(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "empty vocabulary file");
  std::istringstream header(line);
  std::string magic;
  int version = 0;
  std::size_t count = 0;
  if (!(header >> magic >> version >> count) || magic != "goalrec-vocabulary" || version != 1)
    throw ParseError(1, "not a version-1 vocabulary file");
  Vocabulary vocab;
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw ParseError(i + 2, "truncated vocabulary");
    if (line.size() < 4 || line[2] != ' ') throw ParseError(i + 2, "malformed vocabulary entry");
    auto kind = line.substr(0, 2);
    auto token = std::string_view(line).substr(3);
    if (i == 0) {
      if (token != kUnknownToken) throw ParseError(2, "first entry must be " + std::string(kUnknownToken));
      continue;
    }
    Command c;
    if (kind == "DC") {
      c = vocab.add_token(token);
      if (!c.is_data()) throw ParseError(i + 2, "DC entry without class:variable");
    } else if (kind == "SC") {
      c = vocab.add_software(token);
    } else {
      throw ParseError(i + 2, "unknown kind tag '" + kind + "'");
    }
    if (c.id != i) throw ParseError(i + 2, "duplicate vocabulary entry");
  }
  return vocab;
}

}  // namespace goalrec
