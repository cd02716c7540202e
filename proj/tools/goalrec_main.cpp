#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "goalrec/baselines.hpp"
#include "goalrec/eval.hpp"
#include "goalrec/neural.hpp"
#include "goalrec/pipeline.hpp"
#include "goalrec/random.hpp"
#include "goalrec/service.hpp"
#include "goalrec/synthetic.hpp"

// After Eigen: resolv.h defines _res.
#include "httplib.h"

using namespace goalrec;
namespace fs = std::filesystem;

namespace {

struct Global {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool quiet = false;
};

PipelineConfig load_config(const Global& g) {
  if (g.config.empty()) throw Error("--config is required for this command");
  auto c = PipelineConfig::load(g.config);
  if (g.seed) c.set_seed(*g.seed);
  if (!g.out.empty()) c.out_dir = g.out;
  return c;
}

Logger logger(const Global& g) {
  if (g.quiet) return {};
  return [](const std::string& line) { std::cerr << line << '\n'; };
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read " + p.string());
  return in;
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  return out;
}

void print_scores(const std::vector<ModelScore>& models) {
  std::printf("%-24s %8s %8s %8s %8s %8s\n", "model", "examples", "acc", "p_bar", "go1", "go1_mac");
  for (const auto& m : models)
    std::printf("%-24s %8zu %8.4f %8.4f %8.4f %8.4f\n", m.name.c_str(), m.examples, m.accuracy, m.p_bar, m.go1,
                m.go1_macro);
}

void run_stage(const Global& g, Stage last) {
  const auto c = load_config(g);
  const auto r = run_pipeline(c, last, logger(g));
  if (last == Stage::Eval) std::cout << r.report.string() << '\n';
}

struct RunArgs {
  std::string run = "run";
  std::size_t window = 10;
};

void add_run_args(CLI::App* app, RunArgs& a) {
  app->add_option("--run", a.run, "Run directory from a pipeline invocation")->capture_default_str();
  app->add_option("--window", a.window, "Window length")->capture_default_str()->check(CLI::PositiveNumber);
}

std::vector<std::size_t> parse_counts(const std::string& text) {
  std::vector<std::size_t> out;
  std::istringstream in(text);
  std::string item;
  try {
    while (std::getline(in, item, ',')) {
      const auto dash = item.find('-');
      if (dash == std::string::npos) {
        out.push_back(std::stoul(item));
        continue;
      }
      const auto lo = std::stoul(item.substr(0, dash)), hi = std::stoul(item.substr(dash + 1));
      for (auto k = lo; k <= hi; ++k) out.push_back(k);
    }
  } catch (const std::logic_error&) {
    throw Error("not a count list: '" + text + "'");
  }
  return out;
}

std::vector<SequenceExample> partition_windows(const RunData& d, const std::string& part, std::size_t w) {
  if (part == "train") return windows(d.train, w);
  if (part == "validation") return windows(d.validation, w);
  if (part == "test") return windows(d.test, w);
  throw Error("unknown partition '" + part + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Goal-driven next-data-command recommendation"};
  app.require_subcommand(1);
  Global g;
  app.add_option("--config", g.config, "Pipeline INI file");
  app.add_option("--seed", g.seed, "Override [run] seed (re-derives every stage seed)");
  app.add_option("--out", g.out, "Override the run directory");
  app.add_flag("-q,--quiet", g.quiet, "No progress output");

  // gen
  auto* gen = app.add_subcommand("gen", "Write a synthetic corpus file with planted goals");
  SyntheticConfig syn;
  std::string gen_out = "synthetic.txt";
  gen->add_option("-o,--output", gen_out, "Corpus file")->capture_default_str();
  gen->add_option("--sessions", syn.sessions)->capture_default_str();
  gen->add_option("--k-true", syn.k_true)->capture_default_str();
  gen->add_option("--dc", syn.dc_count)->capture_default_str();
  gen->add_option("--sc", syn.sc_count)->capture_default_str();
  gen->add_option("--zipf", syn.zipf_exponent)->capture_default_str();
  gen->add_option("--len-min", syn.session_len_min)->capture_default_str();
  gen->add_option("--len-max", syn.session_len_max)->capture_default_str();
  gen->add_option("--noise", syn.noise)->capture_default_str();
  gen->add_option("--preferred-mass", syn.preferred_mass)->capture_default_str();
  gen->add_option("--transition", syn.transition_prob)->capture_default_str();
  gen->callback([&] {
    if (g.seed) syn.seed = *g.seed;
    const auto c = generate_synthetic(syn);
    auto out = open_out(gen_out);
    write_corpus(out, c.sessions, c.vocab);
  });

  // pipeline stages
  app.add_subcommand("ingest", "Run the corpus stage")->callback([&] { run_stage(g, Stage::Corpus); });
  auto* goals = app.add_subcommand("goals", "Goal discovery");
  goals->require_subcommand(1);
  goals->add_subcommand("fit", "Run stages up to goal fitting")->callback([&] { run_stage(g, Stage::Goals); });

  auto* scan = goals->add_subcommand("scan", "Coherence scan over candidate goal counts");
  std::string scan_run = "run", scan_range = "2-6";
  std::size_t scan_top = 10;
  BtmConfig scan_btm;
  scan->add_option("--run", scan_run)->capture_default_str();
  scan->add_option("--range", scan_range, "e.g. 2-6 or 2,4,8")->capture_default_str();
  scan->add_option("--top-n", scan_top)->capture_default_str();
  scan->add_option("--iterations", scan_btm.iterations)->capture_default_str();
  scan->add_option("--burn-in", scan_btm.burn_in)->capture_default_str();
  scan->callback([&] {
    RunLayout layout{scan_run};
    auto vin = open_in(layout.vocabulary());
    auto vocab = Vocabulary::load(vin);
    auto pin = open_in(layout.partition("train"));
    const auto sessions = read_corpus(pin, vocab, false);
    const auto ks = parse_counts(scan_range);
    if (ks.empty()) throw Error("empty --range");
    if (g.seed) scan_btm.seed = *g.seed;
    scan_btm.alpha = 0.0;
    const auto s = select_goal_count(sessions, vocab, ks, scan_btm, scan_top);
    std::printf("%4s %10s %10s %10s\n", "k", "uci", "umass", "combined");
    for (std::size_t i = 0; i < s.candidates.size(); ++i)
      std::printf("%4zu %10.4f %10.4f %10.4f%s\n", s.candidates[i], s.uci[i], s.umass[i], s.combined[i],
                  s.candidates[i] == s.chosen ? "  *" : "");
  });

  auto* show = goals->add_subcommand("show", "Print each goal's top data commands");
  std::string show_run = "run";
  std::size_t show_n = 10;
  show->add_option("--run", show_run)->capture_default_str();
  show->add_option("-n,--top", show_n)->capture_default_str();
  show->callback([&] {
    RunLayout layout{show_run};
    auto vin = open_in(layout.vocabulary());
    const auto vocab = Vocabulary::load(vin);
    auto gin = open_in(layout.goal_model());
    const auto gm = GoalModel::load(gin);
    for (GoalId k = 0; k < gm.k(); ++k) {
      std::printf("goal %u", k);
      if (k < gm.labels.size() && !gm.labels[k].empty()) std::printf(" (%s)", gm.labels[k].c_str());
      std::printf("  theta %.4f\n", gm.theta[k]);
      for (const auto& s : top_k(gm.goal_defs[k], show_n))
        std::printf("  %-28s %.4f\n", vocab.slot_token(s.slot).c_str(), s.p);
    }
  });

  app.add_subcommand("train", "Run stages up to model training")->callback([&] { run_stage(g, Stage::Train); });
  app.add_subcommand("finetune", "Run stages up to fine-tuning")->callback([&] { run_stage(g, Stage::Finetune); });
  auto* eval = app.add_subcommand("eval", "Evaluation");
  eval->require_subcommand(1);
  eval->add_subcommand("run", "Run every stage and write the report")->callback([&] {
    run_stage(g, Stage::Eval);
  });
  app.add_subcommand("all", "Run the full pipeline")->callback([&] { run_stage(g, Stage::Eval); });

  // baselines
  auto* baseline = app.add_subcommand("baseline", "Fit or evaluate a single baseline on a run directory");
  baseline->require_subcommand(1);
  RunArgs bargs;
  std::string b_kind = "markov1", b_model;
  std::size_t b_suffix = 4;
  auto* bfit = baseline->add_subcommand("fit");
  add_run_args(bfit, bargs);
  bfit->add_option("--kind", b_kind, "top50 | markov1 | markov2 | cpt | ensemble-<kind>")->capture_default_str();
  bfit->add_option("--cpt-suffix", b_suffix)->capture_default_str();
  bfit->add_option("-o,--output", b_model, "Model file")->required();
  bfit->callback([&] {
    const auto d = load_run(RunLayout{bargs.run});
    const auto top = Top50Model::fit(windows(d.train, bargs.window), d.vocab);
    auto fit = [&](const std::string& kind, std::span<const Session> s) -> std::unique_ptr<Recommender> {
      if (kind == "top50") return std::make_unique<Top50Model>(Top50Model::fit(windows(s, bargs.window), d.vocab));
      if (kind == "markov1") return std::make_unique<MarkovModel>(MarkovModel::fit(s, d.vocab, 1, top));
      if (kind == "markov2") return std::make_unique<MarkovModel>(MarkovModel::fit(s, d.vocab, 2, top));
      if (kind == "cpt") return std::make_unique<CptModel>(CptModel::fit(s, d.vocab, {b_suffix}, top));
      throw Error("unknown baseline '" + kind + "'");
    };
    std::unique_ptr<Recommender> m;
    if (b_kind.starts_with("ensemble-")) {
      const auto base = b_kind.substr(9);
      m = std::make_unique<EnsembleModel>(
          EnsembleModel::fit(d.train, d.goals.k(), [&](std::span<const Session> s) { return fit(base, s); }));
    } else {
      m = fit(b_kind, d.train);
    }
    auto out = open_out(b_model);
    m->save(out);
  });

  RunArgs eargs;
  std::vector<std::string> e_models;
  std::string e_part = "test";
  auto* beval = baseline->add_subcommand("eval", "Evaluate model files (any kind)");
  add_run_args(beval, eargs);
  beval->add_option("models", e_models, "Model files")->required();
  beval->add_option("--partition", e_part)->capture_default_str();
  beval->callback([&] {
    const auto d = load_run(RunLayout{eargs.run});
    const auto ex = partition_windows(d, e_part, eargs.window);
    std::vector<ModelScore> scores;
    for (const auto& f : e_models) {
      auto in = open_in(f);
      scores.push_back(evaluate(*load_recommender(in), ex, d.goals.goal_defs, d.vocab, fs::path(f).stem().string()));
    }
    print_scores(scores);
  });

  // neural
  auto* neural = app.add_subcommand("neural", "Neural model utilities");
  neural->require_subcommand(1);
  RunArgs nargs;
  ModelConfig mc;
  TrainConfig tc;
  std::string n_variant = "gain", n_encoder = "lstm", n_out;
  auto* ntrain = neural->add_subcommand("train", "Train one neural model on a run directory");
  add_run_args(ntrain, nargs);
  ntrain->add_option("--variant", n_variant)->capture_default_str();
  ntrain->add_option("--encoder", n_encoder)->capture_default_str();
  ntrain->add_option("--embed-dim", mc.embed_dim)->capture_default_str();
  ntrain->add_option("--hidden-dim", mc.hidden_dim)->capture_default_str();
  ntrain->add_option("--layers", mc.layers)->capture_default_str();
  ntrain->add_option("--dropout", mc.dropout)->capture_default_str();
  ntrain->add_option("--epochs", tc.epochs)->capture_default_str();
  ntrain->add_option("--lr", tc.learning_rate)->capture_default_str();
  ntrain->add_option("--batch-size", tc.batch_size)->capture_default_str();
  ntrain->add_option("-o,--output", n_out, "Model file")->required();
  ntrain->callback([&] {
    const auto d = load_run(RunLayout{nargs.run});
    mc.variant = parse_variant(n_variant);
    mc.encoder = parse_encoder(n_encoder);
    mc.vocab_size = d.vocab.size();
    mc.data_count = d.vocab.data_count();
    mc.goal_count = d.goals.k();
    if (g.seed) mc.seed = tc.seed = *g.seed;
    auto p = train(mc, windows(d.train, nargs.window), windows(d.validation, nargs.window), tc, d.vocab,
                   [&](const EpochLog& e) {
                     if (!g.quiet)
                       std::fprintf(stderr, "epoch %zu loss %.4f val acc %.4f\n", e.epoch, e.train_loss,
                                    e.validation_accuracy);
                   });
    auto out = open_out(n_out);
    NeuralRecommender(std::move(p), n_variant).save(out);
  });

  RunArgs fargs;
  std::string f_model, f_out;
  std::optional<GoalId> f_goal;
  TrainConfig ftc;
  auto* nft = neural->add_subcommand("finetune", "Fine-tune a goal-informed model per goal");
  add_run_args(nft, fargs);
  nft->add_option("--model", f_model, "Global model file")->required();
  nft->add_option("--goal", f_goal, "Only this goal (others keep the global model)");
  nft->add_option("--alpha", ftc.loss_alpha, "Cross-entropy weight in the combined loss")->capture_default_str();
  nft->add_option("--epochs", ftc.epochs)->capture_default_str();
  nft->add_option("--lr", ftc.learning_rate)->capture_default_str();
  nft->add_option("-o,--output", f_out, "Fine-tuned model file")->required();
  nft->callback([&] {
    const auto d = load_run(RunLayout{fargs.run});
    auto in = open_in(f_model);
    const auto loaded = load_recommender(in);
    const auto* global = dynamic_cast<const NeuralRecommender*>(loaded.get());
    if (!global) throw Error(f_model + " is not a neural model");
    if (f_goal && *f_goal >= d.goals.k()) throw Error("goal " + std::to_string(*f_goal) + " does not exist");
    if (g.seed) ftc.seed = *g.seed;
    const auto tr = windows(d.train, fargs.window), va = windows(d.validation, fargs.window);
    std::vector<std::optional<Parameters>> per(d.goals.k());
    for (GoalId k = 0; k < d.goals.k(); ++k) {
      if (f_goal && k != *f_goal) continue;
      std::vector<SequenceExample> gt, gv;
      for (const auto& e : tr)
        if (e.goal == k) gt.push_back(e);
      for (const auto& e : va)
        if (e.goal == k) gv.push_back(e);
      if (gt.empty()) continue;
      per[k] = fine_tune(global->parameters(), k, gt, gv, d.goals.goal_defs[k], ftc, d.vocab);
    }
    auto out = open_out(f_out);
    FineTunedRecommender(global->parameters(), std::move(per)).save(out);
  });

  auto* ngc = neural->add_subcommand("gradcheck", "Finite-difference gradient check on a tiny random model");
  std::string gc_variant = "all", gc_encoder = "all";
  double gc_alpha = 0.5;
  ngc->add_option("--variant", gc_variant)->capture_default_str();
  ngc->add_option("--encoder", gc_encoder)->capture_default_str();
  ngc->add_option("--alpha", gc_alpha)->capture_default_str();
  int gc_status = 0;
  ngc->callback([&] {
    std::vector<Variant> vs;
    std::vector<Encoder> es;
    if (gc_variant == "all") vs = {Variant::Vanilla, Variant::GCoRe, Variant::GComm, Variant::GAIn};
    else vs = {parse_variant(gc_variant)};
    if (gc_encoder == "all") es = {Encoder::Recurrent, Encoder::Convolutional};
    else es = {parse_encoder(gc_encoder)};
    Vocabulary v;
    for (int i = 0; i < 4; ++i) v.add_data("c", "v" + std::to_string(i));
    for (int i = 0; i < 3; ++i) v.add_software("s" + std::to_string(i));
    const std::vector<double> q{0.4, 0.3, 0.2, 0.1};
    Rng rng(g.seed.value_or(1));
    for (auto var : vs)
      for (auto enc : es) {
        ModelConfig c;
        c.vocab_size = v.size();
        c.data_count = 4;
        c.embed_dim = 3;
        c.hidden_dim = 4;
        c.filter_widths = {1, 2};
        c.filter_count = 3;
        c.variant = var;
        c.encoder = enc;
        c.goal_count = 2;
        c.seed = rng.next();
        const auto p = Parameters::initialize(c);
        std::vector<Command> window;
        for (int i = 0; i < 4; ++i) window.push_back(v.command(static_cast<CommandId>(1 + rng.below(v.size() - 1))));
        const auto goal = c.goal_informed() ? std::optional<GoalId>(1) : std::nullopt;
        const auto r = check_gradient(p, window, goal, {2, gc_alpha, q});
        const bool ok = r.max_relative_error < 1e-4;
        if (!ok) gc_status = 1;
        std::printf("%-8s %-5s params %6zu  max rel err %.3e  %s%s\n", std::string(to_string(var)).c_str(),
                    std::string(to_string(enc)).c_str(), r.checked, r.max_relative_error, ok ? "ok" : "FAIL at ",
                    ok ? "" : (r.worst_block + "[" + std::to_string(r.worst_index) + "]").c_str());
      }
  });

  // serve
  auto* serve = app.add_subcommand("serve", "Serve recommendations over HTTP");
  std::string s_run = "run", s_model, s_host = "127.0.0.1";
  int s_port = 8080;
  ServiceConfig scfg;
  std::int64_t ttl_seconds = scfg.ttl.count();
  std::string s_static;
  serve->add_option("--run", s_run)->capture_default_str();
  serve->add_option("--model", s_model, "Model name in <run>/models")->required();
  serve->add_option("--host", s_host)->capture_default_str();
  serve->add_option("--port", s_port)->capture_default_str();
  serve->add_option("--top-k", scfg.top_k)->capture_default_str();
  serve->add_option("--window", scfg.window)->capture_default_str();
  serve->add_option("--ttl", ttl_seconds, "Session idle timeout in seconds")->capture_default_str();
  serve->add_option("--static", s_static, "Web client bundle directory");
  serve->callback([&] {
    scfg.ttl = std::chrono::seconds(ttl_seconds);
    scfg.static_dir = s_static;
    auto sessions = load_service(s_run, s_model, scfg);
    httplib::Server http;
    install_routes(http, *sessions);
    if (!http.bind_to_port(s_host, s_port)) throw Error("cannot bind " + s_host + ":" + std::to_string(s_port));
    std::cerr << "listening on http://" << s_host << ':' << s_port << '\n';
    http.listen_after_bind();
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 2;
  }
  return gc_status;
}
