#include "goalrec/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "goalrec/error.hpp"
#include "goalrec/random.hpp"

namespace goalrec {

namespace {

std::string required_string(const nlohmann::json& rec, const char* key, std::size_t line) {
  auto it = rec.find(key);
  if (it == rec.end()) throw ParseError(line, std::string("missing field '") + key + "'");
  if (!it->is_string()) throw ParseError(line, std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

}  // namespace

std::vector<LogEvent> parse_log(std::istream& in, Vocabulary& vocab,
                                const std::unordered_set<std::string>& drop) {
  std::vector<LogEvent> events;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(line_no, std::string("malformed record: ") + e.what());
    }
    if (!rec.is_object()) throw ParseError(line_no, "record is not an object");

    auto ts = rec.find("ts");
    if (ts == rec.end()) throw ParseError(line_no, "missing field 'ts'");
    if (!ts->is_number_integer()) throw ParseError(line_no, "field 'ts' must be an integer");
    LogEvent ev;
    ev.timestamp = ts->get<std::int64_t>();
    if (ev.timestamp < 0) throw ParseError(line_no, "negative timestamp");
    ev.user = required_string(rec, "user", line_no);

    auto kind = required_string(rec, "kind", line_no);
    const bool has_class = rec.contains("class");
    const bool has_variable = rec.contains("variable");
    std::string token;
    try {
      if (kind == "SC") {
        if (has_class || has_variable) throw ParseError(line_no, "class/variable only allowed for DC");
        token = required_string(rec, "cmd", line_no);
        if (drop.contains(token)) continue;
        ev.command = vocab.add_software(token);
      } else if (kind == "DC") {
        auto cls = required_string(rec, "class", line_no);
        auto var = required_string(rec, "variable", line_no);
        token = cls + ":" + var;
        if (drop.contains(token)) continue;
        ev.command = vocab.add_data(cls, var);
      } else {
        throw ParseError(line_no, "unknown kind tag '" + kind + "'");
      }
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(line_no, e.what());
    }
    events.push_back(std::move(ev));
  }
  return events;
}

std::vector<Session> sessionize(std::span<const LogEvent> events, const Vocabulary& vocab,
                                std::int64_t inactivity_gap) {
  struct Open {
    Session session;
    std::size_t first_event = 0;
    std::int64_t last_ts = 0;
    bool seen = false;
  };
  const auto sign_out = vocab.find(Vocabulary::kSignOut);
  std::map<std::string, Open> open;
  std::vector<std::pair<std::size_t, Session>> closed;

  auto close = [&closed](Open& o) {
    if (!o.session.commands.empty()) closed.emplace_back(o.first_event, std::move(o.session));
    o.session = Session{};
  };

  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& ev = events[i];
    auto& o = open[ev.user];
    if (o.seen) {
      if (ev.timestamp < o.last_ts)
        throw Error("events for user '" + ev.user + "' are not timestamp-sorted (event " +
                    std::to_string(i + 1) + ")");
      if (ev.timestamp - o.last_ts > inactivity_gap) close(o);
    }
    o.seen = true;
    o.last_ts = ev.timestamp;
    if (sign_out && ev.command == *sign_out) {
      close(o);
      continue;
    }
    if (o.session.commands.empty()) {
      o.session.user = ev.user;
      o.first_event = i;
    }
    o.session.commands.push_back(ev.command);
  }
  for (auto& [user, o] : open) close(o);

  std::stable_sort(closed.begin(), closed.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Session> out;
  out.reserve(closed.size());
  for (auto& [first, s] : closed) out.push_back(std::move(s));
  return out;
}

std::vector<SequenceExample> windows(const Session& session, std::size_t w,
                                     std::size_t session_ref) {
  if (w == 0) throw Error("window length must be at least 1");
  std::vector<SequenceExample> out;
  const auto& cmds = session.commands;
  if (cmds.size() <= w) return out;
  // next_data[i]: index of the first data command at position >= i.
  std::vector<std::size_t> next_data(cmds.size() + 1, cmds.size());
  for (std::size_t i = cmds.size(); i-- > 0;)
    next_data[i] = cmds[i].is_data() ? i : next_data[i + 1];
  for (std::size_t start = 0; start + w < cmds.size(); ++start) {
    auto t = next_data[start + w];
    if (t == cmds.size()) break;  // later starts cannot find a target either
    SequenceExample ex;
    ex.window.assign(cmds.begin() + static_cast<std::ptrdiff_t>(start),
                     cmds.begin() + static_cast<std::ptrdiff_t>(start + w));
    ex.target = cmds[t];
    ex.session = session_ref;
    ex.goal = session.goal;
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<SequenceExample> windows(std::span<const Session> sessions, std::size_t w) {
  std::vector<SequenceExample> out;
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    auto ex = windows(sessions[i], w, i);
    out.insert(out.end(), std::make_move_iterator(ex.begin()), std::make_move_iterator(ex.end()));
  }
  return out;
}

Split split(std::span<const Session> sessions, const SplitRatios& ratios, std::uint64_t seed) {
  if (sessions.size() < 3) throw Error("split needs at least 3 sessions");
  if (ratios.train < 0 || ratios.validation < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9)
    throw Error("split ratios must be non-negative and sum to 1");
  const auto n = sessions.size();
  const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios.validation));
  const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios.test));
  if (n_val + n_test > n) throw Error("split ratios leave no room for training sessions");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order.begin(), order.end());

  Split out;
  out.validation_index.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  out.test_index.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val),
                        order.begin() + static_cast<std::ptrdiff_t>(n_val + n_test));
  out.train_index.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val + n_test), order.end());
  // Keep original relative order inside each partition.
  for (auto* idx : {&out.train_index, &out.validation_index, &out.test_index})
    std::sort(idx->begin(), idx->end());
  for (auto i : out.train_index) out.train.push_back(sessions[i]);
  for (auto i : out.validation_index) out.validation.push_back(sessions[i]);
  for (auto i : out.test_index) out.test.push_back(sessions[i]);
  return out;
}

Vocabulary restrict_to_training(const Vocabulary& full, Split& parts) {
  std::vector<bool> seen(full.size(), false);
  for (const auto& s : parts.train)
    for (auto c : s.commands) seen[c.id] = true;
  Vocabulary vocab;
  std::vector<CommandId> remap(full.size(), Vocabulary::kUnknown);
  for (CommandId id = 1; id < full.size(); ++id)
    if (seen[id]) remap[id] = vocab.add_token(full.token(id)).id;
  auto apply = [&](std::vector<Session>& sessions) {
    for (auto& s : sessions)
      for (auto& c : s.commands) c = vocab.command(remap[c.id]);
  };
  apply(parts.train);
  apply(parts.validation);
  apply(parts.test);
  return vocab;
}

void write_corpus(std::ostream& out, std::span<const Session> sessions, const Vocabulary& vocab) {
  for (const auto& s : sessions) {
    out << "goal=";
    if (s.goal)
      out << *s.goal;
    else
      out << "none";
    for (auto c : s.commands) out << ' ' << vocab.token(c.id);
    out << '\n';
  }
}

std::vector<Session> read_corpus(std::istream& in, Vocabulary& vocab, bool extend) {
  std::vector<Session> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream fields(line);
    std::string head;
    fields >> head;
    if (head.rfind("goal=", 0) != 0) throw ParseError(line_no, "session line must start with goal=");
    Session s;
    s.user = "s" + std::to_string(out.size());
    auto g = head.substr(5);
    if (g != "none") {
      try {
        std::size_t used = 0;
        auto v = std::stoul(g, &used);
        if (used != g.size()) throw std::invalid_argument(g);
        s.goal = static_cast<GoalId>(v);
      } catch (const std::exception&) {
        throw ParseError(line_no, "bad goal label '" + g + "'");
      }
    }
    std::string tok;
    while (fields >> tok) {
      try {
        s.commands.push_back(extend ? vocab.add_token(tok) : vocab.lookup(tok));
      } catch (const Error& e) {
        throw ParseError(line_no, e.what());
      }
    }
    if (s.commands.empty()) throw ParseError(line_no, "empty session");
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace goalrec
