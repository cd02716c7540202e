#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "goalrec/baselines.hpp"
#include "goalrec/error.hpp"
#include "goalrec/text_io.hpp"

namespace goalrec {

CptModel CptModel::fit(std::span<const Session> sessions, const Vocabulary& vocab, const CptConfig& config,
                       Top50Model backoff) {
  if (config.suffix_length == 0) throw Error("cpt: suffix_length must be >= 1");
  if (backoff.output_size() != vocab.data_count()) throw Error("cpt: backoff size mismatch");
  CptModel m;
  m.config_ = config;
  m.data_count_ = vocab.data_count();
  m.backoff_ = std::move(backoff);
  for (CommandId id = 0; id < vocab.size(); ++id) {
    m.kinds_.push_back(vocab.kind(id));
    m.slots_.push_back(vocab.kind(id) == CommandKind::Data ? static_cast<std::int64_t>(vocab.slot(id)) : -1);
  }
  m.nodes_.push_back(Node{});
  for (const auto& s : sessions) {
    const auto seq = static_cast<std::uint32_t>(m.lookup_.size());
    std::uint32_t node = 0;
    for (auto c : s.commands) {
      if (c.id >= m.kinds_.size()) throw Error("cpt: command outside vocabulary");
      auto& children = m.nodes_[node].children;
      auto it = children.find(c.id);
      if (it == children.end()) {
        const auto child = static_cast<std::uint32_t>(m.nodes_.size());
        m.nodes_[node].children.emplace(c.id, child);
        m.nodes_.push_back(Node{c.id, node, {}});
        node = child;
      } else {
        node = it->second;
      }
      auto& ids = m.inverted_[c.id];
      if (ids.empty() || ids.back() != seq) ids.push_back(seq);
    }
    m.lookup_.push_back(node);
  }
  return m;
}

std::span<const std::uint32_t> CptModel::sessions_with(CommandId c) const {
  auto it = inverted_.find(c);
  if (it == inverted_.end()) return {};
  return it->second;
}

std::vector<Command> CptModel::reconstruct(std::size_t sequence) const {
  std::vector<Command> out;
  for (auto node = lookup_.at(sequence); node != 0; node = nodes_[node].parent)
    out.push_back({kinds_[nodes_[node].item], nodes_[node].item});
  std::reverse(out.begin(), out.end());
  return out;
}

Distribution CptModel::predict_dist(std::span<const Command> window, std::optional<GoalId>) const {
  Distribution scores(data_count_, 0.0);
  for (auto len = std::min(config_.suffix_length, window.size()); len > 0; --len) {
    std::vector<CommandId> items;
    for (auto c : window.subspan(window.size() - len)) items.push_back(c.id);
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());

    std::vector<std::uint32_t> candidates;
    for (std::size_t i = 0; i < items.size(); ++i) {
      auto ids = sessions_with(items[i]);
      if (i == 0) {
        candidates.assign(ids.begin(), ids.end());
      } else {
        std::vector<std::uint32_t> both;
        std::set_intersection(candidates.begin(), candidates.end(), ids.begin(), ids.end(),
                              std::back_inserter(both));
        candidates = std::move(both);
      }
      if (candidates.empty()) break;
    }

    bool any = false;
    for (auto seq : candidates) {
      auto cmds = reconstruct(seq);
      // Match point: first position by which every suffix item has appeared.
      std::vector<bool> seen(items.size(), false);
      std::size_t missing = items.size(), p = 0;
      for (; p < cmds.size() && missing > 0; ++p) {
        auto it = std::lower_bound(items.begin(), items.end(), cmds[p].id);
        if (it != items.end() && *it == cmds[p].id && !seen[it - items.begin()]) {
          seen[it - items.begin()] = true;
          --missing;
        }
      }
      for (std::size_t j = p; j < cmds.size(); ++j) {
        auto slot = slots_[cmds[j].id];
        if (slot < 0) continue;
        scores[static_cast<std::size_t>(slot)] += 1.0 / static_cast<double>(j - p + 1);
        any = true;
      }
    }
    if (any) {
      double total = 0.0;
      for (auto s : scores) total += s;
      for (auto& s : scores) s /= total;
      return scores;
    }
  }
  return backoff_.distribution();
}

void CptModel::save(std::ostream& out) const {
  out << "goalrec-model cpt 1\n";
  out << "suffix " << config_.suffix_length << " D " << data_count_ << " V " << kinds_.size() << '\n';
  for (std::size_t i = 0; i < slots_.size(); ++i) out << (i ? " " : "") << slots_[i];
  out << '\n';
  backoff_.save(out);
  out << "sequences " << lookup_.size() << '\n';
  for (std::size_t s = 0; s < lookup_.size(); ++s) {
    auto cmds = reconstruct(s);
    out << cmds.size();
    for (auto c : cmds) out << ' ' << c.id;
    out << '\n';
  }
}

CptModel CptModel::load_body(std::istream& in) {
  std::istringstream header(read_line(in, "cpt header"));
  std::string ts, td, tv;
  CptConfig config;
  std::size_t d = 0, v = 0;
  if (!(header >> ts >> config.suffix_length >> td >> d >> tv >> v) || ts != "suffix" || td != "D" || tv != "V")
    throw Error("malformed cpt header");

  // Rebuild a vocabulary with the same ids, kinds and slots.
  std::istringstream slot_row(read_line(in, "cpt slots"));
  Vocabulary vocab;
  for (std::size_t id = 0; id < v; ++id) {
    std::int64_t slot = 0;
    if (!(slot_row >> slot)) throw Error("cpt: expected " + std::to_string(v) + " slots");
    if (id == 0) continue;
    auto c = slot >= 0 ? vocab.add_data("c", std::to_string(id)) : vocab.add_software("s" + std::to_string(id));
    if (c.id != id || (slot >= 0 && vocab.slot(c.id) != static_cast<std::size_t>(slot)))
      throw Error("cpt: inconsistent slot table");
  }
  if (vocab.data_count() != d) throw Error("cpt: slot table does not match D");

  auto line = read_line(in, "model header");
  if (line != "goalrec-model top50 1") throw Error("cpt: expected embedded top50 model");
  auto backoff = Top50Model::load_body(in);

  std::istringstream sh(read_line(in, "sequences"));
  std::string tag;
  std::size_t n = 0;
  if (!(sh >> tag >> n) || tag != "sequences") throw Error("cpt: expected sequences section");
  std::vector<Session> sessions(n);
  for (auto& s : sessions) {
    std::istringstream row(read_line(in, "cpt sequence"));
    std::size_t len = 0;
    if (!(row >> len)) throw Error("cpt: malformed sequence row");
    for (std::size_t i = 0; i < len; ++i) {
      CommandId id = 0;
      if (!(row >> id) || id >= v) throw Error("cpt: malformed sequence row");
      s.commands.push_back(vocab.command(id));
    }
  }
  return fit(sessions, vocab, config, std::move(backoff));
}

}  // namespace goalrec
