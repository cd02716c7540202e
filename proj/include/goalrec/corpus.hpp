#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace goalrec {

using GoalId = std::uint32_t;
using CommandId = std::uint32_t;

// Probability vector over the data-command slots of a vocabulary.
using Distribution = std::vector<double>;

enum class CommandKind : std::uint8_t { Software, Data };

struct Command {
  CommandKind kind = CommandKind::Software;
  CommandId id = 0;

  bool is_data() const noexcept { return kind == CommandKind::Data; }
  friend bool operator==(const Command&, const Command&) = default;
};

// Dense command index. Id 0 is the reserved unknown-command token (a software
// command). Data commands are identified by their (class, variable) pair and
// rendered as "class:variable"; software tokens may not contain ':'.
//
// Data commands additionally get a dense "slot" in 0..data_count()-1, ordered
// by id. Every distribution over data commands is indexed by slot.
class Vocabulary {
 public:
  static constexpr CommandId kUnknown = 0;
  static constexpr std::string_view kUnknownToken = "<unk>";
  static constexpr std::string_view kSignOut = "sign-out";

  Vocabulary();

  Command add_software(std::string_view name);
  Command add_data(std::string_view cls, std::string_view variable);
  // Interns a rendered token; "a:b" is a data command, anything else software.
  Command add_token(std::string_view token);

  std::optional<Command> find(std::string_view token) const;
  // Unknown tokens map to kUnknown.
  Command lookup(std::string_view token) const;

  Command command(CommandId id) const;
  const std::string& token(CommandId id) const;
  CommandKind kind(CommandId id) const { return kinds_.at(id); }

  std::size_t size() const noexcept { return tokens_.size(); }
  std::size_t data_count() const noexcept { return data_ids_.size(); }
  std::span<const CommandId> data_ids() const noexcept { return data_ids_; }

  // Throws Error for software commands.
  std::size_t slot(CommandId id) const;
  CommandId data_id(std::size_t slot) const { return data_ids_.at(slot); }
  const std::string& slot_token(std::size_t slot) const { return token(data_ids_.at(slot)); }

  void save(std::ostream& out) const;
  static Vocabulary load(std::istream& in);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_ && a.kinds_ == b.kinds_;
  }

 private:
  Command intern(std::string token, CommandKind kind);

  std::vector<std::string> tokens_;
  std::vector<CommandKind> kinds_;
  std::unordered_map<std::string, CommandId> index_;
  std::vector<CommandId> data_ids_;
  std::vector<std::int64_t> slots_;
};

struct LogEvent {
  std::int64_t timestamp = 0;
  std::string user;
  Command command;
};

struct Session {
  std::string user;
  std::vector<Command> commands;
  std::optional<GoalId> goal;
};

struct SequenceExample {
  std::vector<Command> window;
  Command target;
  std::size_t session = 0;  // index of the source session in its partition
  std::optional<GoalId> goal;
};

// Line-delimited JSON click log:
//   {"ts": 12, "user": "u1", "kind": "SC", "cmd": "open"}
//   {"ts": 13, "user": "u1", "kind": "DC", "class": "sort", "variable": "revenue"}
// Blank lines are skipped. Commands whose token is in `drop` are discarded
// (UI-event filtering). Extends `vocab`.
std::vector<LogEvent> parse_log(std::istream& in, Vocabulary& vocab,
                                const std::unordered_set<std::string>& drop = {});

// Splits each user's stream at sign-out (dropped) and at gaps strictly longer
// than `inactivity_gap` seconds. Users may interleave; output is ordered by
// the position of each session's first event.
std::vector<Session> sessionize(std::span<const LogEvent> events, const Vocabulary& vocab,
                                std::int64_t inactivity_gap = 21600);

// Sliding windows of length w (stride 1); the target is the first data command
// after the window.
std::vector<SequenceExample> windows(const Session& session, std::size_t w,
                                     std::size_t session_ref = 0);
std::vector<SequenceExample> windows(std::span<const Session> sessions, std::size_t w);

struct SplitRatios {
  double train = 0.75;
  double validation = 0.125;
  double test = 0.125;
};

struct Split {
  std::vector<Session> train, validation, test;
  // Index of each partition member in the input list.
  std::vector<std::size_t> train_index, validation_index, test_index;
};

// Whole-session split. Validation and test sizes are round(n * ratio); the
// remainder goes to train.
Split split(std::span<const Session> sessions, const SplitRatios& ratios, std::uint64_t seed);

// Rebuilds the vocabulary from the commands present in the training sessions
// (keeping their relative order in `full`) and remaps every partition;
// commands unseen in training become the unknown command.
Vocabulary restrict_to_training(const Vocabulary& full, Split& split);

// Corpus file: one session per line, "goal=<int|none>" followed by tokens.
void write_corpus(std::ostream& out, std::span<const Session> sessions, const Vocabulary& vocab);
// Unknown tokens are interned when `extend` is set, otherwise mapped to <unk>.
std::vector<Session> read_corpus(std::istream& in, Vocabulary& vocab, bool extend);

}  // namespace goalrec
