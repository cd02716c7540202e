#include "goalrec/pipeline.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "goalrec/baselines.hpp"
#include "goalrec/digest.hpp"
#include "goalrec/error.hpp"
#include "goalrec/eval.hpp"
#include "goalrec/random.hpp"
#include "goalrec/text_io.hpp"

namespace goalrec {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace {

std::vector<std::string> split_list(const std::string& text, char sep = ',') {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    const auto e = item.find_last_not_of(" \t");
    out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::string join(const std::vector<std::string>& items, char sep = ',') {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

template <class T>
std::string join_numbers(const std::vector<T>& items) {
  std::vector<std::string> s;
  for (auto x : items) s.push_back(std::to_string(x));
  return join(s);
}

// "2-6" or "2,3,5".
std::vector<std::size_t> parse_counts(const std::string& text) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(text)) {
    const auto dash = item.find('-');
    try {
      if (dash == std::string::npos) {
        out.push_back(std::stoul(item));
      } else {
        const auto lo = std::stoul(item.substr(0, dash)), hi = std::stoul(item.substr(dash + 1));
        if (lo > hi) throw Error("empty range '" + item + "'");
        for (auto k = lo; k <= hi; ++k) out.push_back(k);
      }
    } catch (const std::logic_error&) {
      throw Error("not a count list: '" + text + "'");
    }
  }
  return out;
}

// Typed access to one INI section; every key must be consumed.
class Section {
 public:
  Section(const pt::ptree* tree, std::string name) : tree_(tree), name_(std::move(name)) {}

  template <class T>
  void read(const std::string& key, T& value) {
    const auto text = raw(key);
    if (!text) return;
    if constexpr (std::is_same_v<T, std::string>) {
      value = *text;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (*text == "true" || *text == "1" || *text == "yes") value = true;
      else if (*text == "false" || *text == "0" || *text == "no") value = false;
      else fail(key, *text);
    } else if constexpr (std::is_floating_point_v<T>) {
      try {
        value = parse_double(*text);
      } catch (const Error&) {
        fail(key, *text);
      }
    } else {
      std::size_t used = 0;
      long long v = 0;
      try {
        v = std::stoll(*text, &used);
      } catch (const std::logic_error&) {
        fail(key, *text);
      }
      if (used != text->size() || (std::is_unsigned_v<T> && v < 0)) fail(key, *text);
      value = static_cast<T>(v);
    }
  }

  std::optional<std::string> raw(const std::string& key) {
    consumed_.insert(key);
    if (!tree_) return std::nullopt;
    auto child = tree_->get_child_optional(pt::ptree::path_type(key, '\0'));
    if (!child) return std::nullopt;
    return child->data();
  }

  void finish() const {
    if (!tree_) return;
    for (const auto& [key, _] : *tree_)
      if (!consumed_.count(key)) throw Error("config: unknown key '" + key + "' in [" + name_ + "]");
  }

 private:
  [[noreturn]] void fail(const std::string& key, const std::string& text) const {
    throw Error("config: [" + name_ + "] " + key + " = '" + text + "' is not valid");
  }

  const pt::ptree* tree_;
  std::string name_;
  std::set<std::string> consumed_;
};

void read_train(Section& s, TrainConfig& t) {
  s.read("learning_rate", t.learning_rate);
  s.read("momentum", t.momentum);
  s.read("weight_decay", t.weight_decay);
  s.read("batch_size", t.batch_size);
  s.read("epochs", t.epochs);
}

std::string train_text(const TrainConfig& t) {
  std::ostringstream s;
  s << "learning_rate=" << format_double(t.learning_rate) << "\nmomentum=" << format_double(t.momentum)
    << "\nweight_decay=" << format_double(t.weight_decay) << "\nbatch_size=" << t.batch_size
    << "\nepochs=" << t.epochs << "\nalpha=" << format_double(t.loss_alpha) << "\nseed=" << t.seed << '\n';
  return s.str();
}

struct NeuralSpec {
  Variant variant;
  Encoder encoder;
};

NeuralSpec parse_neural_name(const std::string& name, Encoder default_encoder) {
  auto base = name;
  auto encoder = default_encoder;
  for (const auto* suffix : {"-cnn", "-lstm"}) {
    const std::string s(suffix);
    if (base.size() > s.size() && base.ends_with(s)) {
      encoder = parse_encoder(s.substr(1));
      base.resize(base.size() - s.size());
    }
  }
  return {parse_variant(base), encoder};
}

const std::set<std::string> kBaselineKinds{"top50", "markov1", "markov2", "cpt"};

std::string ensemble_base(const std::string& name) {
  return name.starts_with("ensemble-") ? name.substr(9) : std::string();
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

template <class F>
void write_file(const fs::path& path, F&& body) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  body(out);
  if (!out) throw Error("cannot write " + path.string());
}

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  return in;
}

std::vector<Session> read_partition(const fs::path& path, Vocabulary& vocab) {
  auto in = open_input(path);
  return read_corpus(in, vocab, false);
}

std::unique_ptr<Recommender> read_model(const fs::path& path) {
  auto in = open_input(path);
  return load_recommender(in);
}

const char* kPartitions[] = {"train", "validation", "test"};

}  // namespace

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Corpus: return "corpus";
    case Stage::Goals: return "goals";
    case Stage::Train: return "train";
    case Stage::Finetune: return "finetune";
    case Stage::Eval: return "eval";
  }
  return "?";
}

fs::path RunLayout::partition(std::string_view name) const { return root / "corpus" / (std::string(name) + ".txt"); }
fs::path RunLayout::labeled(std::string_view name) const { return root / "goals" / (std::string(name) + ".txt"); }
fs::path RunLayout::model(std::string_view name) const { return root / "models" / (std::string(name) + ".model"); }
fs::path RunLayout::train_log(std::string_view name) const {
  return root / "models" / (std::string(name) + ".log.csv");
}
fs::path RunLayout::digest(Stage s) const { return root / "state" / (std::string(to_string(s)) + ".digest"); }

PipelineConfig PipelineConfig::parse(std::istream& in, const fs::path& base_dir) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error("config: line " + std::to_string(e.line()) + ": " + e.message());
  }
  static const std::set<std::string> known{"run", "corpus", "goals", "models", "train", "finetune", "eval"};
  for (const auto& [name, child] : tree) {
    if (!known.count(name)) throw Error("config: unknown section [" + name + "]");
    if (child.empty()) throw Error("config: '" + name + "' must be a section");
  }
  auto section = [&tree](const std::string& name) {
    auto c = tree.get_child_optional(name);
    return Section(c ? &*c : nullptr, name);
  };

  PipelineConfig c;
  {
    auto s = section("run");
    if (!s.raw("seed")) throw Error("config: [run] seed is required");
    s.read("seed", c.seed);
    std::string out;
    s.read("out", out);
    if (!out.empty()) c.out_dir = fs::path(out).is_absolute() ? fs::path(out) : base_dir / out;
    s.finish();
  }
  {
    auto s = section("corpus");
    std::string source = "synthetic";
    s.read("source", source);
    if (source == "synthetic") c.source = CorpusSource::Synthetic;
    else if (source == "log") c.source = CorpusSource::Log;
    else if (source == "corpus") c.source = CorpusSource::Corpus;
    else throw Error("config: [corpus] source must be synthetic, log or corpus");
    std::string path, drop;
    s.read("path", path);
    if (!path.empty()) c.input = fs::path(path).is_absolute() ? fs::path(path) : base_dir / path;
    s.read("drop", drop);
    c.drop = split_list(drop);
    s.read("inactivity_gap", c.inactivity_gap);
    s.read("window", c.window);
    s.read("train", c.ratios.train);
    s.read("validation", c.ratios.validation);
    s.read("test", c.ratios.test);
    auto& y = c.synthetic;
    s.read("k_true", y.k_true);
    s.read("dc_count", y.dc_count);
    s.read("sc_count", y.sc_count);
    s.read("zipf_exponent", y.zipf_exponent);
    s.read("sessions", y.sessions);
    s.read("session_len_min", y.session_len_min);
    s.read("session_len_max", y.session_len_max);
    s.read("noise", y.noise);
    s.read("data_prob", y.data_prob);
    s.read("preferred_mass", y.preferred_mass);
    s.read("transition_prob", y.transition_prob);
    s.finish();
  }
  {
    auto s = section("goals");
    s.read("k", c.btm.k);
    if (s.raw("alpha")) {
      s.read("alpha", c.btm.alpha);
      c.alpha_from_k = false;
    }
    s.read("beta", c.btm.beta);
    s.read("iterations", c.btm.iterations);
    s.read("burn_in", c.btm.burn_in);
    s.read("average", c.btm.average_samples);
    s.read("biterm_cap", c.btm.biterm_cap);
    std::string scan, labels;
    s.read("scan", scan);
    c.scan = parse_counts(scan);
    s.read("top_n", c.coherence_top_n);
    s.read("labels", labels);
    c.labels = split_list(labels, '|');
    s.finish();
  }
  {
    auto s = section("models");
    std::string baselines, neural, encoder, widths;
    s.read("baselines", baselines);
    s.read("neural", neural);
    c.baselines = split_list(baselines);
    c.neural = split_list(neural);
    s.read("encoder", encoder);
    if (!encoder.empty()) c.model.encoder = parse_encoder(encoder);
    s.read("embed_dim", c.model.embed_dim);
    s.read("hidden_dim", c.model.hidden_dim);
    s.read("layers", c.model.layers);
    s.read("dropout", c.model.dropout);
    s.read("filter_widths", widths);
    if (!widths.empty()) c.model.filter_widths = parse_counts(widths);
    s.read("filter_count", c.model.filter_count);
    s.read("cpt_suffix", c.cpt_suffix);
    s.finish();
  }
  {
    auto s = section("train");
    read_train(s, c.train);
    s.finish();
  }
  {
    c.finetune = c.train;
    auto s = section("finetune");
    std::string models;
    s.read("models", models);
    c.finetune_models = split_list(models);
    read_train(s, c.finetune);
    s.read("alpha", c.finetune.loss_alpha);
    s.finish();
  }
  {
    auto s = section("eval");
    s.read("adversarial", c.adversarial);
    s.read("tables", c.tables);
    s.finish();
  }
  c.set_seed(c.seed);
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read config " + path.string());
  return parse(in, path.parent_path());
}

void PipelineConfig::set_seed(std::uint64_t s) {
  seed = s;
  synthetic.seed = mix_seed(s, 1);
  btm.seed = mix_seed(s, 3);
  model.seed = mix_seed(s, 4);
  train.seed = mix_seed(s, 5);
  finetune.seed = mix_seed(s, 6);
}

void PipelineConfig::validate() const {
  if (source == CorpusSource::Synthetic) {
    synthetic.validate();
  } else {
    if (input.empty()) throw Error("config: [corpus] path is required for source = log/corpus");
    if (!fs::is_regular_file(input)) throw Error("config: corpus input " + input.string() + " does not exist");
  }
  if (window < 1) throw Error("config: window must be >= 1");
  if (inactivity_gap < 0) throw Error("config: inactivity_gap must be >= 0");
  const double r = ratios.train + ratios.validation + ratios.test;
  if (std::abs(r - 1.0) > 1e-9 || ratios.train < 0 || ratios.validation < 0 || ratios.test < 0)
    throw Error("config: split ratios must be non-negative and sum to 1");
  auto b = btm;
  if (scan.empty()) {
    b.validate();
  } else {
    for (auto k : scan)
      if (k < 1) throw Error("config: goal counts in scan must be >= 1");
    b.k = scan.front();
    b.validate();
  }
  if (!labels.empty() && scan.empty() && labels.size() != btm.k)
    throw Error("config: " + std::to_string(labels.size()) + " labels for " + std::to_string(btm.k) + " goals");
  if (cpt_suffix < 1) throw Error("config: cpt_suffix must be >= 1");

  std::set<std::string> names;
  auto unique = [&names](const std::string& n) {
    if (!names.insert(n).second) throw Error("config: model '" + n + "' listed twice");
  };
  for (const auto& m : baselines) {
    unique(m);
    const auto base = ensemble_base(m);
    if (!kBaselineKinds.count(base.empty() ? m : base)) throw Error("config: unknown baseline '" + m + "'");
  }
  for (const auto& m : neural) {
    unique(m);
    auto mc = model;
    const auto spec = parse_neural_name(m, model.encoder);
    mc.variant = spec.variant;
    mc.encoder = spec.encoder;
    mc.vocab_size = 2;
    mc.data_count = 1;
    mc.goal_count = 1;
    mc.validate();
  }
  train.validate();
  for (const auto& m : finetune_models) {
    if (std::find(neural.begin(), neural.end(), m) == neural.end())
      throw Error("config: fine-tuned model '" + m + "' is not in [models] neural");
    if (parse_neural_name(m, model.encoder).variant == Variant::Vanilla)
      throw Error("config: fine-tuning needs a goal-informed model, '" + m + "' is vanilla");
  }
  if (!finetune_models.empty()) finetune.validate();
  if (baselines.empty() && neural.empty()) throw Error("config: no models to train");
}

std::string PipelineConfig::corpus_section() const {
  std::ostringstream s;
  s << "source=" << static_cast<int>(source) << "\ndrop=" << join(drop) << "\ninactivity_gap=" << inactivity_gap
    << "\nsplit=" << format_double(ratios.train) << ',' << format_double(ratios.validation) << ','
    << format_double(ratios.test) << "\nsplit_seed=" << mix_seed(seed, 2) << '\n';
  if (source == CorpusSource::Synthetic) {
    const auto& y = synthetic;
    s << "k_true=" << y.k_true << "\ndc=" << y.dc_count << "\nsc=" << y.sc_count
      << "\nzipf=" << format_double(y.zipf_exponent) << "\nsessions=" << y.sessions << "\nlen=" << y.session_len_min
      << ',' << y.session_len_max << "\nnoise=" << format_double(y.noise) << "\ndata_prob=" << format_double(y.data_prob)
      << "\npreferred_mass=" << format_double(y.preferred_mass)
      << "\ntransition_prob=" << format_double(y.transition_prob) << "\nseed=" << y.seed << '\n';
  }
  return s.str();
}

std::string PipelineConfig::goals_section() const {
  std::ostringstream s;
  s << "k=" << btm.k << "\nalpha=" << (alpha_from_k ? std::string("50/k") : format_double(btm.alpha))
    << "\nbeta=" << format_double(btm.beta) << "\niterations=" << btm.iterations << "\nburn_in=" << btm.burn_in
    << "\naverage=" << btm.average_samples << "\ncap=" << btm.biterm_cap << "\nseed=" << btm.seed
    << "\nscan=" << join_numbers(scan) << "\ntop_n=" << coherence_top_n << "\nlabels=" << join(labels, '|') << '\n';
  return s.str();
}

std::string PipelineConfig::train_section() const {
  std::ostringstream s;
  s << "window=" << window << "\nbaselines=" << join(baselines) << "\nneural=" << join(neural)
    << "\nencoder=" << to_string(model.encoder) << "\nE=" << model.embed_dim << "\nH=" << model.hidden_dim
    << "\nlayers=" << model.layers << "\ndropout=" << format_double(model.dropout)
    << "\nwidths=" << join_numbers(model.filter_widths) << "\nfilters=" << model.filter_count
    << "\nmodel_seed=" << model.seed << "\ncpt_suffix=" << cpt_suffix << '\n'
    << train_text(train);
  return s.str();
}

std::string PipelineConfig::finetune_section() const {
  return "models=" + join(finetune_models) + "\n" + train_text(finetune);
}

std::string PipelineConfig::eval_section() const {
  return "adversarial=" + std::to_string(adversarial) + "\ntables=" + std::to_string(tables) + "\n";
}

RunData load_run(const RunLayout& layout) {
  RunData d;
  {
    auto in = open_input(layout.vocabulary());
    d.vocab = Vocabulary::load(in);
  }
  {
    auto in = open_input(layout.goal_model());
    d.goals = GoalModel::load(in);
  }
  d.train = read_partition(layout.labeled("train"), d.vocab);
  d.validation = read_partition(layout.labeled("validation"), d.vocab);
  d.test = read_partition(layout.labeled("test"), d.vocab);
  return d;
}

namespace {

class Runner {
 public:
  Runner(const PipelineConfig& c, const Logger& log) : c_(c), layout_{c.out_dir}, log_(log) {}

  PipelineResult run(Stage last) {
    PipelineResult result;
    std::string upstream;
    const Stage order[] = {Stage::Corpus, Stage::Goals, Stage::Train, Stage::Finetune, Stage::Eval};
    for (auto stage : order) {
      if (static_cast<int>(stage) > static_cast<int>(last)) break;
      const auto digest = sha256_hex(std::string(to_string(stage)) + "\n" + section(stage) + "upstream=" + upstream);
      StageRecord rec{stage, false, digest};
      const auto digest_file = layout_.digest(stage);
      if (read_text(digest_file) == digest + "\n" && outputs_exist(stage)) {
        rec.skipped = true;
        say(stage, "up to date, skipped");
      } else {
        std::error_code ec;
        fs::remove(digest_file, ec);
        try {
          execute(stage);
        } catch (const StageError&) {
          throw;
        } catch (const Error& e) {
          throw StageError(stage, e.what());
        } catch (const std::exception& e) {
          throw StageError(stage, std::string("internal error: ") + e.what());
        }
        write_text(digest_file, digest + "\n");
        say(stage, "done");
      }
      upstream = digest;
      result.stages.push_back(rec);
    }
    if (static_cast<int>(last) >= static_cast<int>(Stage::Eval)) result.report = layout_.report();
    return result;
  }

 private:
  std::string section(Stage s) const {
    switch (s) {
      case Stage::Corpus: {
        auto text = c_.corpus_section();
        if (c_.source != CorpusSource::Synthetic) text += "input_sha256=" + sha256_file(c_.input) + "\n";
        return text;
      }
      case Stage::Goals: return c_.goals_section();
      case Stage::Train: return c_.train_section();
      case Stage::Finetune: return c_.finetune_section();
      case Stage::Eval: return c_.eval_section();
    }
    return {};
  }

  std::vector<fs::path> outputs(Stage s) const {
    std::vector<fs::path> out;
    switch (s) {
      case Stage::Corpus:
        out.push_back(layout_.vocabulary());
        for (auto p : kPartitions) out.push_back(layout_.partition(p));
        break;
      case Stage::Goals:
        out.push_back(layout_.goal_model());
        for (auto p : kPartitions) out.push_back(layout_.labeled(p));
        break;
      case Stage::Train:
        for (const auto& m : c_.baselines) out.push_back(layout_.model(m));
        for (const auto& m : c_.neural) out.push_back(layout_.model(m));
        break;
      case Stage::Finetune:
        for (const auto& m : c_.finetune_models) out.push_back(layout_.model(m + "-ft"));
        break;
      case Stage::Eval: out.push_back(layout_.report()); break;
    }
    return out;
  }

  bool outputs_exist(Stage s) const {
    for (const auto& p : outputs(s))
      if (!fs::is_regular_file(p)) return false;
    return true;
  }

  void say(Stage s, const std::string& msg) const {
    if (log_) log_("[" + std::string(to_string(s)) + "] " + msg);
  }

  void execute(Stage s) {
    switch (s) {
      case Stage::Corpus: return corpus();
      case Stage::Goals: return goals();
      case Stage::Train: return train();
      case Stage::Finetune: return finetune();
      case Stage::Eval: return eval();
    }
  }

  void corpus() {
    Vocabulary full;
    std::vector<Session> sessions;
    switch (c_.source) {
      case CorpusSource::Synthetic: {
        auto syn = generate_synthetic(c_.synthetic);
        full = std::move(syn.vocab);
        sessions = std::move(syn.sessions);
        break;
      }
      case CorpusSource::Log: {
        auto in = open_input(c_.input);
        const std::unordered_set<std::string> drop(c_.drop.begin(), c_.drop.end());
        const auto events = parse_log(in, full, drop);
        sessions = sessionize(events, full, c_.inactivity_gap);
        break;
      }
      case CorpusSource::Corpus: {
        auto in = open_input(c_.input);
        sessions = read_corpus(in, full, true);
        break;
      }
    }
    if (sessions.empty()) throw Error("corpus has no sessions");
    auto parts = split(sessions, c_.ratios, mix_seed(c_.seed, 2));
    const auto vocab = restrict_to_training(full, parts);
    if (vocab.data_count() == 0) throw Error("training sessions contain no data commands");
    write_file(layout_.vocabulary(), [&](std::ostream& out) { vocab.save(out); });
    const std::vector<Session>* lists[] = {&parts.train, &parts.validation, &parts.test};
    for (int i = 0; i < 3; ++i)
      write_file(layout_.partition(kPartitions[i]), [&](std::ostream& out) { write_corpus(out, *lists[i], vocab); });
    say(Stage::Corpus, std::to_string(sessions.size()) + " sessions, " + std::to_string(vocab.size()) + " commands (" +
                           std::to_string(vocab.data_count()) + " data), split " + std::to_string(parts.train.size()) +
                           "/" + std::to_string(parts.validation.size()) + "/" + std::to_string(parts.test.size()));
  }

  void goals() {
    Vocabulary vocab;
    {
      auto in = open_input(layout_.vocabulary());
      vocab = Vocabulary::load(in);
    }
    std::vector<std::vector<Session>> parts;
    for (auto p : kPartitions) parts.push_back(read_partition(layout_.partition(p), vocab));

    auto bc = c_.btm;
    if (!c_.scan.empty()) {
      const auto scan = select_goal_count(parts[0], vocab, c_.scan, scan_template(), c_.coherence_top_n);
      write_file(layout_.goal_scan(), [&](std::ostream& out) {
        out << "k,uci,umass,combined\n";
        for (std::size_t i = 0; i < scan.candidates.size(); ++i)
          out << scan.candidates[i] << ',' << format_double(scan.uci[i]) << ',' << format_double(scan.umass[i]) << ','
              << format_double(scan.combined[i]) << '\n';
      });
      bc.k = scan.chosen;
      say(Stage::Goals, "coherence scan chose k = " + std::to_string(bc.k));
    }
    if (c_.alpha_from_k) bc.alpha = 50.0 / static_cast<double>(bc.k);
    auto model = btm_fit(parts[0], vocab, bc);
    if (!c_.labels.empty()) {
      if (c_.labels.size() != bc.k)
        throw Error(std::to_string(c_.labels.size()) + " labels configured for " + std::to_string(bc.k) + " goals");
      model.labels = c_.labels;
    }
    write_file(layout_.goal_model(), [&](std::ostream& out) { model.save(out); });
    std::vector<std::size_t> sizes(bc.k, 0);
    for (std::size_t i = 0; i < 3; ++i) {
      for (auto& s : parts[i]) {
        s.goal = assign_goal(model, s, bc.biterm_cap);
        if (i == 0) ++sizes[*s.goal];
      }
      write_file(layout_.labeled(kPartitions[i]), [&](std::ostream& out) { write_corpus(out, parts[i], vocab); });
    }
    std::string msg = "k = " + std::to_string(bc.k) + ", training sessions per goal:";
    for (auto n : sizes) msg += " " + std::to_string(n);
    say(Stage::Goals, msg);
  }

  // select_goal_count derives alpha per candidate only when told to.
  BtmConfig scan_template() const {
    auto b = c_.btm;
    if (c_.alpha_from_k) b.alpha = 0.0;
    return b;
  }

  void train() {
    const auto run = load_run(layout_);
    const auto& vocab = run.vocab;
    const auto k = run.goals.k();
    const auto train_ex = windows(run.train, c_.window);
    const auto val_ex = windows(run.validation, c_.window);
    if (train_ex.empty()) throw Error("no training windows of length " + std::to_string(c_.window));
    const auto top = Top50Model::fit(train_ex, vocab);

    auto fit_base = [&](const std::string& kind, std::span<const Session> sessions) -> std::unique_ptr<Recommender> {
      if (kind == "top50") return std::make_unique<Top50Model>(Top50Model::fit(windows(sessions, c_.window), vocab));
      if (kind == "markov1") return std::make_unique<MarkovModel>(MarkovModel::fit(sessions, vocab, 1, top));
      if (kind == "markov2") return std::make_unique<MarkovModel>(MarkovModel::fit(sessions, vocab, 2, top));
      return std::make_unique<CptModel>(CptModel::fit(sessions, vocab, {c_.cpt_suffix}, top));
    };
    for (const auto& name : c_.baselines) {
      const auto base = ensemble_base(name);
      std::unique_ptr<Recommender> model;
      if (base.empty()) {
        model = fit_base(name, run.train);
      } else {
        model = std::make_unique<EnsembleModel>(EnsembleModel::fit(
            run.train, k, [&](std::span<const Session> part) { return fit_base(base, part); }));
      }
      write_file(layout_.model(name), [&](std::ostream& out) { model->save(out); });
      say(Stage::Train, name + " fitted");
    }
    for (const auto& name : c_.neural) {
      auto mc = c_.model;
      const auto spec = parse_neural_name(name, c_.model.encoder);
      mc.variant = spec.variant;
      mc.encoder = spec.encoder;
      mc.vocab_size = vocab.size();
      mc.data_count = vocab.data_count();
      mc.goal_count = k;
      std::ostringstream log;
      log << "epoch,train_loss,validation_accuracy,validation_loss\n";
      auto params = goalrec::train(mc, train_ex, val_ex, c_.train, vocab, [&](const EpochLog& e) {
        log << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.validation_accuracy) << ','
            << format_double(e.validation_loss) << '\n';
        say(Stage::Train, name + " epoch " + std::to_string(e.epoch) + " loss " + std::to_string(e.train_loss) +
                              " val acc " + std::to_string(e.validation_accuracy));
      });
      write_text(layout_.train_log(name), log.str());
      NeuralRecommender model(std::move(params), name);
      write_file(layout_.model(name), [&](std::ostream& out) { model.save(out); });
    }
  }

  void finetune() {
    if (c_.finetune_models.empty()) return;
    const auto run = load_run(layout_);
    const auto& vocab = run.vocab;
    const auto k = run.goals.k();
    const auto train_ex = windows(run.train, c_.window);
    const auto val_ex = windows(run.validation, c_.window);
    for (const auto& name : c_.finetune_models) {
      const auto loaded = read_model(layout_.model(name));
      const auto* global = dynamic_cast<const NeuralRecommender*>(loaded.get());
      if (!global) throw Error("model file for '" + name + "' is not a neural model");
      std::vector<std::optional<Parameters>> per_goal(k);
      for (GoalId g = 0; g < k; ++g) {
        std::vector<SequenceExample> gt, gv;
        for (const auto& e : train_ex)
          if (e.goal == g) gt.push_back(e);
        for (const auto& e : val_ex)
          if (e.goal == g) gv.push_back(e);
        if (gt.empty()) {
          say(Stage::Finetune, name + " goal " + std::to_string(g) + ": no training windows, keeping the global model");
          continue;
        }
        per_goal[g] = fine_tune(global->parameters(), g, gt, gv, run.goals.goal_defs[g], c_.finetune, vocab,
                                [&](const EpochLog& e) {
                                  say(Stage::Finetune, name + " goal " + std::to_string(g) + " epoch " +
                                                           std::to_string(e.epoch) + " val loss " +
                                                           std::to_string(e.validation_loss));
                                });
      }
      FineTunedRecommender tuned(global->parameters(), std::move(per_goal));
      write_file(layout_.model(name + "-ft"), [&](std::ostream& out) { tuned.save(out); });
    }
  }

  void eval() {
    const auto run = load_run(layout_);
    const auto& vocab = run.vocab;
    const auto test = windows(run.test, c_.window);
    if (test.empty()) throw Error("no test windows of length " + std::to_string(c_.window));
    EvalReport report;
    report.metadata["aggregation"] = "micro";
    report.metadata["goal_count"] = std::to_string(run.goals.k());
    report.metadata["seed"] = std::to_string(c_.seed);
    report.metadata["test_windows"] = std::to_string(test.size());
    report.metadata["window"] = std::to_string(c_.window);
    std::string corpus_text;
    for (auto p : kPartitions) corpus_text += read_text(layout_.labeled(p));
    report.metadata["corpus_sha256"] = sha256_hex(corpus_text);
    for (auto s : {Stage::Corpus, Stage::Goals, Stage::Train, Stage::Finetune})
      report.metadata[std::string(to_string(s)) + "_digest"] = read_text(layout_.digest(s)).substr(0, 64);

    std::vector<std::string> names = c_.baselines;
    names.insert(names.end(), c_.neural.begin(), c_.neural.end());
    for (const auto& m : c_.finetune_models) names.push_back(m + "-ft");
    std::map<std::string, std::unique_ptr<Recommender>> models;
    for (const auto& name : names) {
      models[name] = read_model(layout_.model(name));
      report.models.push_back(evaluate(*models[name], test, run.goals.goal_defs, vocab, name));
      const auto& s = report.models.back();
      say(Stage::Eval, name + ": accuracy " + std::to_string(s.accuracy) + ", GO1 " + std::to_string(s.go1));
    }
    if (c_.adversarial && run.goals.k() >= 2)
      for (const auto& m : c_.finetune_models)
        report.adversarial[m + "-ft"] =
            adversarial_eval(*models[m + "-ft"], *models[m], test, run.goals.goal_defs, vocab);
    write_text(layout_.report(), report.to_json());
    if (c_.tables) report.write_tables(layout_.tables());
  }

  const PipelineConfig& c_;
  RunLayout layout_;
  const Logger& log_;
};

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config, Stage last, const Logger& log) {
  config.validate();
  return Runner(config, log).run(last);
}

}  // namespace goalrec
