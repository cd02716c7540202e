#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"

#include "goalrec/error.hpp"
#include "goalrec/random.hpp"
#include "goalrec/synthetic.hpp"

using namespace goalrec;

namespace {

std::vector<LogEvent> parse(const std::string& text, Vocabulary& vocab) {
  std::istringstream in(text);
  return parse_log(in, vocab);
}

std::string sc(std::int64_t ts, const std::string& user, const std::string& cmd) {
  return R"({"ts": )" + std::to_string(ts) + R"(, "user": ")" + user + R"(", "kind": "SC", "cmd": ")" + cmd +
         "\"}\n";
}

std::string dc(std::int64_t ts, const std::string& user, const std::string& cls, const std::string& var) {
  return R"({"ts": )" + std::to_string(ts) + R"(, "user": ")" + user + R"(", "kind": "DC", "class": ")" + cls +
         R"(", "variable": ")" + var + "\"}\n";
}

std::vector<std::string> tokens(const Session& s, const Vocabulary& v) {
  std::vector<std::string> out;
  for (auto c : s.commands) out.push_back(v.token(c.id));
  return out;
}

}  // namespace

TEST_CASE("vocabulary keeps data and software commands apart") {
  Vocabulary v;
  CHECK(v.size() == 1);
  CHECK(v.token(Vocabulary::kUnknown) == "<unk>");
  auto open = v.add_software("open");
  auto rev = v.add_data("sort", "revenue");
  auto rev2 = v.add_token("sort:revenue");
  auto other = v.add_data("filter", "revenue");
  CHECK_FALSE(open.is_data());
  CHECK(rev.is_data());
  CHECK(rev == rev2);
  CHECK(rev != other);  // same variable, different class
  CHECK(v.data_count() == 2);
  CHECK(v.slot(rev.id) == 0);
  CHECK(v.slot(other.id) == 1);
  CHECK_THROWS_AS(v.slot(open.id), Error);
  CHECK(v.lookup("never-seen").id == Vocabulary::kUnknown);
  CHECK_THROWS_AS(v.add_software("a:b"), Error);

  std::stringstream buf;
  v.save(buf);
  auto back = Vocabulary::load(buf);
  CHECK(back == v);
}

TEST_CASE("parse_log") {
  Vocabulary v;
  SUBCASE("empty stream") { CHECK(parse("", v).empty()); }
  SUBCASE("two lines in order") {
    auto ev = parse(sc(1, "u1", "open") + dc(2, "u1", "sort", "rev"), v);
    REQUIRE(ev.size() == 2);
    CHECK(v.token(ev[0].command.id) == "open");
    CHECK(v.token(ev[1].command.id) == "sort:rev");
    CHECK(ev[1].command.is_data());
    CHECK(ev[1].timestamp == 2);
  }
  SUBCASE("missing timestamp names line 1") {
    try {
      parse(R"({"user": "u", "kind": "SC", "cmd": "x"})" "\n", v);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 1);
    }
  }
  SUBCASE("errors carry the line number") {
    try {
      parse(sc(1, "u", "a") + R"({"ts": 2, "user": "u", "kind": "XX", "cmd": "b"})" "\n", v);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
    CHECK_THROWS_AS(parse("{not json\n", v), ParseError);
    CHECK_THROWS_AS(parse(R"({"ts": 1, "user": "u", "kind": "SC", "cmd": "x", "class": "c"})" "\n", v), ParseError);
    CHECK_THROWS_AS(parse(R"({"ts": 1, "user": "u", "kind": "DC", "class": "c"})" "\n", v), ParseError);
  }
  SUBCASE("drop list filters UI events") {
    std::istringstream in(sc(1, "u", "hover") + sc(2, "u", "open"));
    auto ev = parse_log(in, v, {"hover"});
    REQUIRE(ev.size() == 1);
    CHECK(v.token(ev[0].command.id) == "open");
  }
}

TEST_CASE("sessionize") {
  Vocabulary v;
  SUBCASE("sign-out delimits and is dropped") {
    auto ev = parse(sc(0, "u", "cmdA") + sc(1, "u", "sign-out") + sc(2, "u", "cmdB"), v);
    auto s = sessionize(ev, v);
    REQUIRE(s.size() == 2);
    CHECK(tokens(s[0], v) == std::vector<std::string>{"cmdA"});
    CHECK(tokens(s[1], v) == std::vector<std::string>{"cmdB"});
  }
  SUBCASE("six hours of inactivity") {
    auto ev = parse(sc(0, "u", "cmdA") + sc(25000, "u", "cmdB"), v);
    CHECK(sessionize(ev, v).size() == 2);
    auto exact = parse(sc(0, "u", "cmdA") + sc(21600, "u", "cmdB"), v);
    CHECK(sessionize(exact, v).size() == 1);  // the gap must be strictly longer
  }
  SUBCASE("no delimiter") {
    auto ev = parse(sc(0, "u", "cmdA") + sc(10, "u", "cmdB"), v);
    auto s = sessionize(ev, v);
    REQUIRE(s.size() == 1);
    CHECK(s[0].commands.size() == 2);
  }
  SUBCASE("unsorted timestamps within a user") {
    auto ev = parse(sc(10, "u", "a") + sc(5, "u", "b"), v);
    CHECK_THROWS_AS(sessionize(ev, v), Error);
  }
  SUBCASE("interleaved users") {
    auto ev = parse(sc(0, "a", "x") + sc(1, "b", "y") + sc(2, "a", "z") + sc(3, "b", "sign-out"), v);
    auto s = sessionize(ev, v);
    REQUIRE(s.size() == 2);
    CHECK(s[0].user == "a");
    CHECK(tokens(s[0], v) == std::vector<std::string>{"x", "z"});
    CHECK(tokens(s[1], v) == std::vector<std::string>{"y"});
  }
  SUBCASE("partition property") {
    Rng rng(7);
    std::string text;
    std::map<std::string, std::vector<std::string>> stream;
    std::map<std::string, std::int64_t> clock;
    for (int i = 0; i < 400; ++i) {
      auto user = "u" + std::to_string(rng.below(4));
      clock[user] += static_cast<std::int64_t>(rng.bernoulli(0.1) ? 30000 : rng.below(100));
      auto cmd = rng.bernoulli(0.1) ? std::string("sign-out") : "c" + std::to_string(rng.below(6));
      text += sc(clock[user], user, cmd);
      if (cmd != "sign-out") stream[user].push_back(cmd);
    }
    auto ev = parse(text, v);
    auto sessions = sessionize(ev, v);
    std::map<std::string, std::vector<std::string>> rebuilt;
    for (const auto& s : sessions) {
      CHECK_FALSE(s.commands.empty());
      for (const auto& t : tokens(s, v)) {
        CHECK(t != "sign-out");
        rebuilt[s.user].push_back(t);
      }
    }
    CHECK(rebuilt == stream);
  }
}

TEST_CASE("windows") {
  Vocabulary v;
  SUBCASE("figure example: one window, target at index 6") {
    auto s = testing::session_of(v, {"s1", "c:d1", "c:d2", "s2", "s3", "s4", "c:d3"});
    auto ex = windows(s, 6);
    REQUIRE(ex.size() == 1);
    CHECK(ex[0].window.size() == 6);
    CHECK(v.token(ex[0].target.id) == "c:d3");
  }
  SUBCASE("no data command after the window") {
    auto s = testing::session_of(v, {"a", "b", "c"});
    CHECK(windows(s, 3).empty());
    CHECK(windows(s, 1).empty());
  }
  SUBCASE("session shorter than w") {
    auto s = testing::session_of(v, {"a", "c:d"});
    CHECK(windows(s, 5).empty());
  }
  SUBCASE("w = 0 is rejected") {
    auto s = testing::session_of(v, {"a", "c:d"});
    CHECK_THROWS_AS(windows(s, 0), Error);
  }
  SUBCASE("count and targets match a brute-force oracle") {
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<std::string> toks;
      auto len = rng.below(15);
      for (std::uint64_t i = 0; i < len; ++i)
        toks.push_back(rng.bernoulli(0.4) ? "k:d" + std::to_string(rng.below(3)) : "s" + std::to_string(rng.below(3)));
      if (toks.empty()) continue;
      auto s = testing::session_of(v, toks);
      const auto w = 1 + rng.below(5);
      std::vector<std::pair<std::size_t, std::size_t>> expected;  // (start, target index)
      for (std::size_t i = 0; i + w <= toks.size(); ++i)
        for (std::size_t j = i + w; j < toks.size(); ++j)
          if (s.commands[j].is_data()) {
            expected.emplace_back(i, j);
            break;
          }
      auto ex = windows(s, w);
      REQUIRE(ex.size() == expected.size());
      for (std::size_t e = 0; e < ex.size(); ++e) {
        CHECK(ex[e].target.is_data());
        CHECK(ex[e].target == s.commands[expected[e].second]);
        CHECK(ex[e].window.size() == w);
        CHECK(ex[e].window.front() == s.commands[expected[e].first]);
      }
    }
  }
}

TEST_CASE("split") {
  std::vector<Session> sessions(8);
  for (std::size_t i = 0; i < sessions.size(); ++i) sessions[i].user = "u" + std::to_string(i);
  SUBCASE("8 sessions give 6 / 1 / 1") {
    auto s = split(sessions, {}, 1);
    CHECK(s.train.size() == 6);
    CHECK(s.validation.size() == 1);
    CHECK(s.test.size() == 1);
  }
  SUBCASE("determinism and partition") {
    auto a = split(sessions, {}, 5), b = split(sessions, {}, 5);
    CHECK(a.train_index == b.train_index);
    CHECK(a.test_index == b.test_index);
    std::multiset<std::size_t> all;
    for (auto* idx : {&a.train_index, &a.validation_index, &a.test_index}) all.insert(idx->begin(), idx->end());
    CHECK(all.size() == 8);
    CHECK(std::set<std::size_t>(all.begin(), all.end()).size() == 8);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(split(std::span<const Session>(sessions).first(2), {}, 1), Error);
    CHECK_THROWS_AS(split(sessions, {0.5, 0.2, 0.2}, 1), Error);
  }
  SUBCASE("proportions within one session") {
    for (std::size_t n = 3; n < 120; ++n) {
      std::vector<Session> many(n);
      SplitRatios r{0.6, 0.25, 0.15};
      auto s = split(many, r, n);
      CHECK(std::abs(static_cast<double>(s.train.size()) - r.train * static_cast<double>(n)) < 1.0 + 1e-9);
      CHECK(std::abs(static_cast<double>(s.validation.size()) - r.validation * static_cast<double>(n)) <= 0.5);
      CHECK(std::abs(static_cast<double>(s.test.size()) - r.test * static_cast<double>(n)) <= 0.5);
    }
  }
}

TEST_CASE("restrict_to_training maps unseen commands to <unk>") {
  Vocabulary full;
  std::vector<Session> sessions;
  for (int i = 0; i < 8; ++i) sessions.push_back(testing::session_of(full, {"a", "c:x" + std::to_string(i)}));
  auto parts = split(sessions, {}, 2);
  auto vocab = restrict_to_training(full, parts);
  CHECK(vocab.data_count() == 6);
  for (const auto& s : parts.test) {
    CHECK(vocab.token(s.commands[0].id) == "a");
    CHECK(s.commands[1].id == Vocabulary::kUnknown);
  }
  for (const auto& s : parts.train) CHECK(s.commands[1].is_data());
}

TEST_CASE("corpus file round trip") {
  Vocabulary v;
  std::vector<Session> sessions{testing::session_of(v, {"a", "c:d"}), testing::session_of(v, {"c:e"})};
  sessions[0].goal = 2;
  std::stringstream buf;
  write_corpus(buf, sessions, v);
  CHECK(buf.str() == "goal=2 a c:d\ngoal=none c:e\n");
  Vocabulary v2;
  auto back = read_corpus(buf, v2, true);
  REQUIRE(back.size() == 2);
  CHECK(back[0].goal == 2);
  CHECK_FALSE(back[1].goal.has_value());
  CHECK(v2 == v);
  std::istringstream bad("goal=x a\n");
  CHECK_THROWS_AS(read_corpus(bad, v2, true), ParseError);
}

TEST_CASE("synthetic generator") {
  SyntheticConfig cfg;
  SUBCASE("count contract") {
    cfg.sessions = 100;
    auto c = generate_synthetic(cfg);
    REQUIRE(c.sessions.size() == 100);
    for (const auto& s : c.sessions) {
      REQUIRE(s.goal.has_value());
      CHECK(*s.goal < cfg.k_true);
      CHECK(s.commands.size() >= cfg.session_len_min);
      CHECK(s.commands.size() <= cfg.session_len_max);
    }
    CHECK(c.vocab.data_count() == cfg.dc_count);
    CHECK(c.vocab.size() == 1 + cfg.dc_count + cfg.sc_count);
  }
  SUBCASE("byte-identical under a seed") {
    auto a = generate_synthetic(cfg), b = generate_synthetic(cfg);
    std::ostringstream sa, sb;
    write_corpus(sa, a.sessions, a.vocab);
    write_corpus(sb, b.sessions, b.vocab);
    CHECK(sa.str() == sb.str());
    cfg.seed = 2;
    auto c = generate_synthetic(cfg);
    std::ostringstream sc_;
    write_corpus(sc_, c.sessions, c.vocab);
    CHECK(sa.str() != sc_.str());
  }
  SUBCASE("global data-command frequencies follow the Zipf law") {
    // Successor chains shift mass down each goal's ranks; the law holds for independent draws.
    cfg.sessions = 2000;
    cfg.transition_prob = 0.0;
    auto c = generate_synthetic(cfg);
    std::vector<double> freq(cfg.dc_count, 0.0);
    for (const auto& s : c.sessions)
      for (auto cmd : s.commands)
        if (cmd.is_data()) freq[c.vocab.slot(cmd.id)] += 1.0;
    std::sort(freq.rbegin(), freq.rend());
    const auto top = (cfg.dc_count + 3) / 4;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t r = 0; r < top; ++r) {
      const double x = std::log(static_cast<double>(r + 1)), y = std::log(freq[r]);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    const double n = static_cast<double>(top);
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    CHECK(std::abs(slope + cfg.zipf_exponent) <= 0.3);
  }
  SUBCASE("disjoint supports without noise") {
    cfg.noise = 0.0;
    cfg.preferred_mass = 1.0;
    cfg.transition_prob = 0.0;
    auto c = generate_synthetic(cfg);
    for (const auto& s : c.sessions) {
      const auto& support = c.goal_support[*s.goal];
      for (auto cmd : s.commands)
        if (cmd.is_data()) CHECK(std::find(support.begin(), support.end(), cmd.id) != support.end());
    }
    std::set<CommandId> seen;
    for (const auto& sup : c.goal_support)
      for (auto id : sup) CHECK(seen.insert(id).second);
    CHECK(seen.size() == cfg.dc_count);
  }
  SUBCASE("planted goal distributions are normalized") {
    auto c = generate_synthetic(cfg);
    for (const auto& d : c.goal_distribution) {
      double s = 0;
      for (auto p : d) s += p;
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  SUBCASE("invalid configs") {
    cfg.dc_count = 2;
    CHECK_THROWS_AS(generate_synthetic(cfg), Error);
    cfg = {};
    cfg.noise = 1.5;
    CHECK_THROWS_AS(generate_synthetic(cfg), Error);
  }
}
