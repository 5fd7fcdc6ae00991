#include "hyperinf/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "hyperinf/estimators.hpp"
#include "hyperinf/harness.hpp"
#include "hyperinf/io.hpp"
#include "hyperinf/plot.hpp"

namespace hyperinf::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct DampingFlags {
  std::string mode = "per-block";
  double lambda = 0.01;
  double coefficient = kDampingCoefficient;

  Damping resolve() const {
    if (mode == "fixed") return Damping::fixed(lambda);
    if (mode == "per-block") return Damping::per_block(coefficient);
    throw InvalidArgument("--damping must be 'per-block' or 'fixed', got '" + mode + "'");
  }
};

struct IterFlags {
  std::size_t iters = 25;
  double init_scale = 5e-4;
  std::size_t lissa_iters = kLissaDefaultIters;
  std::string inverter = "schulz";

  EstimatorSettings settings(const Damping& damping) const {
    EstimatorSettings s;
    s.iteration.max_iters = iters;
    s.iteration.init_scale = init_scale;
    s.iteration.validate();
    s.damping = damping;
    s.lissa_iters = lissa_iters;
    if (inverter == "schulz")
      s.inverter = Inverter::Schulz;
    else if (inverter == "exact")
      s.inverter = Inverter::Exact;
    else
      throw InvalidArgument("--inverter must be 'schulz' or 'exact', got '" + inverter + "'");
    return s;
  }
};

void add_damping(CLI::App* app, DampingFlags& f) {
  app->add_option("--damping", f.mode, "per-block (0.1 x mean squared gradient norm / d) or fixed")
      ->capture_default_str();
  app->add_option("--lambda", f.lambda, "Damping when --damping fixed")->capture_default_str();
  app->add_option("--damping-coefficient", f.coefficient, "Coefficient of the per-block rule")->capture_default_str();
}

void add_iteration(CLI::App* app, IterFlags& f) {
  app->add_option("--iters", f.iters, "Schulz iterations")->capture_default_str();
  app->add_option("--init-scale", f.init_scale, "X0 = init_scale * I")->capture_default_str();
  app->add_option("--lissa-iters", f.lissa_iters, "LiSSA iterations")->capture_default_str();
  app->add_option("--inverter", f.inverter, "schulz or exact")->capture_default_str();
}

std::vector<std::string> checked_estimators(const std::vector<std::string>& names) {
  if (names.empty()) throw InvalidArgument("--estimators must name at least one estimator");
  for (const auto& n : names) {
    const auto& all = estimator_names();
    if (std::find(all.begin(), all.end(), n) == all.end()) {
      std::string msg = "unknown estimator '" + n + "'";
      const std::string s = suggest(n, all);
      if (!s.empty()) msg += "; did you mean '" + s + "'?";
      throw InvalidArgument(msg);
    }
  }
  return names;
}

json settings_json(const EstimatorSettings& s) {
  return {{"iters", s.iteration.max_iters},
          {"init_scale", s.iteration.init_scale},
          {"lissa_iters", s.lissa_iters},
          {"inverter", s.inverter == Inverter::Schulz ? "schulz" : "exact"},
          {"damping", s.damping.to_json()}};
}

json toy_json(const ToyTask& t) {
  return {{"n_train", t.n_train},         {"n_val", t.n_val},       {"n_test", t.n_test},
          {"dim", t.dim},                 {"classes", t.classes},   {"class_separation", t.class_separation},
          {"flip_fraction", t.flip_fraction}, {"seed", t.seed},     {"learning_rate", t.train.learning_rate},
          {"max_steps", t.train.max_steps}, {"grad_tol", t.train.grad_tol}};
}

void write_json(const fs::path& path, const json& j) { io::write_file_atomic(path, j.dump(2) + "\n"); }

struct ToyFlags {
  ToyTask task;
  std::vector<std::string> estimators{"hyperinf", "datainf", "lissa", "tracin"};
  std::size_t seeds = 3;

  void add(CLI::App* app) {
    app->add_option("--n-train", task.n_train, "Training examples")->capture_default_str();
    app->add_option("--n-val", task.n_val, "Clean validation examples")->capture_default_str();
    app->add_option("--n-test", task.n_test, "Held-out test examples")->capture_default_str();
    app->add_option("--dim", task.dim, "Input dimension")->capture_default_str();
    app->add_option("--classes", task.classes, "Number of classes")->capture_default_str();
    app->add_option("--flip", task.flip_fraction, "Fraction of training labels flipped")->capture_default_str();
    app->add_option("--separation", task.class_separation, "Norm of the centered class means")->capture_default_str();
    app->add_option("--estimators", estimators, "Comma-separated estimator names")->delimiter(',')->capture_default_str();
    app->add_option("--seeds", seeds, "Number of seeds (seed, seed+1, ...)")->capture_default_str();
    app->add_option("--seed", task.seed, "First seed")->capture_default_str();
    app->add_option("--lr", task.train.learning_rate, "Gradient-descent step size")->capture_default_str();
    app->add_option("--max-steps", task.train.max_steps, "Gradient-descent step cap")->capture_default_str();
  }
};

int cmd_converge(const SyntheticSpec& spec, const fs::path& out_dir, std::ostream& out, std::ostream& err) {
  const auto cells = run_convergence_test(spec, [&](const ConvergenceCell& c) {
    err << "converge: d=" << c.d << " N=" << c.n << " schulz relative error " << c.schulz_final_relative()
        << ", datainf error " << c.datainf_error << ", lissa " << (c.lissa.diverged ? "diverged" : "bounded") << "\n";
  });
  io::write_file_atomic(out_dir / "convergence.csv", io::convergence_csv(cells));
  io::write_file_atomic(out_dir / "convergence_summary.csv", io::convergence_summary_csv(cells));
  for (const auto& c : cells) {
    const std::size_t n = spec.iters;
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<double>(i + 1);
    auto relative = [](const ConvergenceTrace& t) {
      std::vector<double> y;
      for (double e : t.per_iteration_error) y.push_back(e / t.reference_norm);
      return y;
    };
    std::vector<plot::Series> series;
    series.push_back({"Schulz", x, relative(c.schulz), c.schulz.diverged});
    series.push_back({"DataInf", x, std::vector<double>(n, c.datainf_error / c.oracle_norm), false});
    series.push_back({"LiSSA", x, relative(c.lissa), c.lissa.diverged});
    plot::PlotOptions opt;
    opt.title = "d=" + std::to_string(c.d) + ", N=" + std::to_string(c.n);
    opt.x_label = "iteration";
    opt.y_label = "relative error";
    opt.log_y = true;
    plot::render_plot(series, opt, out_dir / ("convergence_d" + std::to_string(c.d) + "_n" + std::to_string(c.n) + ".svg"));
  }
  json run = {{"command", "converge"},
              {"dims", spec.dims},
              {"samples", spec.sample_counts},
              {"lambda", spec.lambda},
              {"init_scale", spec.init_scale},
              {"iters", spec.iters},
              {"sample_scale", spec.sample_scale},
              {"seed", spec.seed}};
  write_json(out_dir / "run.json", run);
  out << "wrote " << (out_dir / "convergence.csv").string() << "\n";
  return kExitOk;
}

int cmd_bench(const BenchSpec& spec, const fs::path& out_dir, std::ostream& out, std::ostream& err) {
  const auto rep = run_invert_bench(spec, [&](const BenchSample& s) {
    err << "invert-bench: d=" << s.d << " run " << s.run << " " << s.method << " error " << s.error << " in "
        << s.seconds << " s\n";
  });
  io::write_file_atomic(out_dir / "bench.csv", io::bench_csv(rep));
  io::write_file_atomic(out_dir / "bench_runs.csv", io::bench_runs_csv(rep));
  json run = {{"command", "invert-bench"},
              {"dims", spec.dims},
              {"samples", spec.samples},
              {"seeds", spec.seeds},
              {"iters", spec.iters},
              {"gmres_restart", spec.gmres_restart},
              {"lambda", spec.lambda},
              {"init_scale", spec.init_scale},
              {"sample_scale", spec.sample_scale},
              {"seed", spec.seed}};
  write_json(out_dir / "run.json", run);
  out << io::bench_csv(rep);
  return kExitOk;
}

int cmd_score(const fs::path& manifest, const std::vector<std::string>& names, const EstimatorSettings& settings,
              const fs::path& out_dir, std::ostream& out, std::ostream& err) {
  const auto estimators = checked_estimators(names);
  const GradientDump dump = io::read_dump(manifest);
  for (const auto& name : estimators) {
    const InfluenceReport rep = run_estimator(name, dump, settings);
    for (const auto& w : rep.warnings) err << "score: " << name << ": warning: " << w << "\n";
    io::write_report(rep, out_dir / name);
    out << "wrote " << (out_dir / name / "scores.csv").string() << "\n";
  }
  return kExitOk;
}

int cmd_detect(const ToyFlags& f, const std::vector<double>& p_grid, const EstimatorSettings& settings,
               const fs::path& out_dir, std::ostream& out, std::ostream& err) {
  const auto rep = run_detection(f.task, checked_estimators(f.estimators), p_grid, f.seeds, settings);
  for (const auto& w : rep.warnings) err << "detect: warning: " << w << "\n";
  io::write_file_atomic(out_dir / "detection.csv", io::detection_csv(rep));
  io::write_file_atomic(out_dir / "detection_runs.csv", io::detection_runs_csv(rep));

  std::vector<plot::Series> series;
  for (const auto& c : rep.curves) series.push_back({c.estimator, rep.p_grid, c.mean, false});
  series.push_back({"oracle", rep.p_grid, rep.oracle, false});
  series.push_back({"random", rep.p_grid, rep.random, false});
  plot::PlotOptions opt;
  opt.title = "Mislabeled-example detection";
  opt.x_label = "inspected fraction p (%)";
  opt.y_label = "detection ratio rt(p)";
  plot::render_plot(series, opt, out_dir / "detection.svg");

  json run = {{"command", "detect"},
              {"task", toy_json(f.task)},
              {"estimators", f.estimators},
              {"p_grid", p_grid},
              {"seeds", rep.seeds},
              {"settings", settings_json(settings)},
              {"warnings", rep.warnings}};
  write_json(out_dir / "run.json", run);
  out << "wrote " << (out_dir / "detection.csv").string() << "\n";
  return kExitOk;
}

int cmd_select(const ToyFlags& f, const std::vector<double>& k_grid, const EstimatorSettings& settings,
               const fs::path& out_dir, std::ostream& out, std::ostream&) {
  const auto rep = run_selection(f.task, checked_estimators(f.estimators), k_grid, f.seeds, settings);
  io::write_file_atomic(out_dir / "selection.csv", io::selection_csv(rep));
  json summary = json::array();
  for (const auto& c : rep.cells)
    summary.push_back({{"estimator", c.estimator},
                       {"k", c.k_percent},
                       {"mean_accuracy", io::format_double(c.summary.mean)},
                       {"ci_low", io::format_double(c.summary.low)},
                       {"ci_high", io::format_double(c.summary.high)},
                       {"skipped", c.skipped}});
  json run = {{"command", "select"},
              {"task", toy_json(f.task)},
              {"estimators", f.estimators},
              {"k_grid", k_grid},
              {"seeds", rep.seeds},
              {"settings", settings_json(settings)},
              {"summary", summary}};
  write_json(out_dir / "run.json", run);
  out << "wrote " << (out_dir / "selection.csv").string() << "\n";
  return kExitOk;
}

struct GenFlags {
  std::size_t n = 64;
  std::size_t d = 16;
  std::size_t r = 2;
  std::size_t blocks = 2;
  std::uint64_t seed = 0;
};

int cmd_gen_dump(const GenFlags& g, const fs::path& out_dir, std::ostream& out) {
  if (g.n == 0 || g.d == 0 || g.r == 0 || g.blocks == 0)
    throw InvalidArgument("gen-dump: --n, --d, --r and --blocks must be positive");
  std::mt19937_64 rng(g.seed);
  std::normal_distribution<double> normal;
  auto draw = [&](const std::string& name) {
    DenseMatrix m(g.d, g.r);
    for (std::size_t i = 0; i < g.d; ++i)
      for (std::size_t j = 0; j < g.r; ++j) m(i, j) = normal(rng);
    return GradientBlock{name, std::move(m), false};
  };
  GradientDump dump;
  for (std::size_t l = 0; l < g.blocks; ++l) {
    const std::string name = "layer" + std::to_string(l);
    dump.blocks.push_back({name, g.d, g.r});
    std::vector<GradientBlock> grads;
    for (std::size_t k = 0; k < g.n; ++k) grads.push_back(draw(name));
    dump.train_grads.push_back(std::move(grads));
    // Validation gradient: mean of 16 fresh draws.
    DenseMatrix v(g.d, g.r);
    for (int s = 0; s < 16; ++s) v = add(v, draw(name).values);
    dump.val_grads.push_back(GradientBlock{name, scale(v, 1.0 / 16.0), false});
  }
  for (std::size_t k = 0; k < g.n; ++k) dump.example_ids.push_back("ex" + std::to_string(k));
  out << "wrote " << io::write_dump(dump, out_dir).string() << "\n";
  return kExitOk;
}

std::vector<std::string> long_names(const CLI::App* app) {
  std::vector<std::string> names;
  for (const CLI::Option* o : app->get_options())
    for (const auto& l : o->get_lnames()) names.push_back("--" + l);
  return names;
}

int usage_error(const CLI::App& app, const CLI::App* active, const CLI::ParseError& e, std::ostream& err) {
  err << "error: " << e.what() << "\n";
  if (dynamic_cast<const CLI::ExtrasError*>(&e) != nullptr) {
    std::string msg = e.what();
    const auto colon = msg.find(": ");
    std::istringstream words(colon == std::string::npos ? msg : msg.substr(colon + 2));
    const auto names = long_names(active);
    for (std::string w; words >> w;) {
      const std::string flag = w.substr(0, w.find('='));
      const std::string s = suggest(flag, names);
      if (!s.empty()) err << "did you mean '" << s << "' instead of '" << flag << "'?\n";
    }
  }
  err << "\n" << active->help();
  (void)app;
  return kExitUsage;
}

}  // namespace

std::string suggest(const std::string& word, const std::vector<std::string>& candidates) {
  std::string best;
  std::size_t best_d = 4;
  for (const auto& c : candidates) {
    std::vector<std::size_t> prev(c.size() + 1), cur(c.size() + 1);
    for (std::size_t j = 0; j <= c.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= word.size(); ++i) {
      cur[0] = i;
      for (std::size_t j = 1; j <= c.size(); ++j)
        cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (word[i - 1] == c[j - 1] ? 0u : 1u)});
      std::swap(prev, cur);
    }
    if (prev[c.size()] < best_d) {
      best_d = prev[c.size()];
      best = c;
    }
  }
  return best;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Influence estimation with hyperpower-iteration curvature inverses", "hyperinf"};
  app.require_subcommand(1);
  app.fallthrough(false);

  std::string out_dir = "out";
  auto add_out = [&](CLI::App* sub) { sub->add_option("--out", out_dir, "Output directory")->capture_default_str(); };

  SyntheticSpec conv;
  auto* converge = app.add_subcommand("converge", "Synthetic convergence test: Schulz vs DataInf vs LiSSA");
  converge->add_option("--dims", conv.dims, "Comma-separated dimensions")->delimiter(',')->capture_default_str();
  converge->add_option("--samples", conv.sample_counts, "Comma-separated sample counts N")->delimiter(',')->capture_default_str();
  converge->add_option("--lambda", conv.lambda, "Damping added to the sample sum")->capture_default_str();
  converge->add_option("--init-scale", conv.init_scale, "X0 = init_scale * I")->capture_default_str();
  converge->add_option("--iters", conv.iters, "Iterations for Schulz and LiSSA")->capture_default_str();
  converge->add_option("--sample-scale", conv.sample_scale, "Standard deviation of sample entries")->capture_default_str();
  converge->add_option("--seed", conv.seed, "Random seed")->capture_default_str();
  add_out(converge);

  BenchSpec bench;
  auto* invert = app.add_subcommand("invert-bench", "Error and wall time of GE, CG, GMRES and Schulz");
  invert->add_option("--dims", bench.dims, "Comma-separated dimensions")->delimiter(',')->capture_default_str();
  invert->add_option("--seeds", bench.seeds, "Runs per dimension")->capture_default_str();
  invert->add_option("--samples", bench.samples, "Sample count N of the test matrix")->capture_default_str();
  invert->add_option("--iters", bench.iters, "Iterations for CG, GMRES and Schulz")->capture_default_str();
  invert->add_option("--sample-scale", bench.sample_scale, "Standard deviation of sample entries")->capture_default_str();
  invert->add_option("--seed", bench.seed, "First seed")->capture_default_str();
  add_out(invert);

  std::string manifest;
  std::vector<std::string> score_est{"hyperinf"};
  DampingFlags score_damp;
  IterFlags score_iter;
  auto* score = app.add_subcommand("score", "Score a gradient dump with one or more estimators");
  score->add_option("--manifest", manifest, "Path to manifest.json")->required();
  score->add_option("--estimators", score_est, "Comma-separated estimator names")->delimiter(',')->capture_default_str();
  add_damping(score, score_damp);
  add_iteration(score, score_iter);
  add_out(score);

  ToyFlags det;
  std::vector<double> p_grid = default_p_grid();
  DampingFlags det_damp;
  IterFlags det_iter;
  auto* detect = app.add_subcommand("detect", "Mislabeled-example detection on a toy logistic task");
  det.add(detect);
  detect->add_option("--p-grid", p_grid, "Comma-separated inspection percentages")->delimiter(',')->capture_default_str();
  add_damping(detect, det_damp);
  add_iteration(detect, det_iter);
  add_out(detect);

  ToyFlags sel;
  std::vector<double> k_grid{5, 20, 40};
  DampingFlags sel_damp;
  IterFlags sel_iter;
  auto* select = app.add_subcommand("select", "Retrain on the most helpful k% of a toy logistic task");
  sel.add(select);
  select->add_option("--k-grid", k_grid, "Comma-separated selection percentages")->delimiter(',')->capture_default_str();
  add_damping(select, sel_damp);
  add_iteration(select, sel_iter);
  add_out(select);

  GenFlags gen;
  auto* gen_dump = app.add_subcommand("gen-dump", "Write a random gradient dump");
  gen_dump->add_option("--n", gen.n, "Examples")->capture_default_str();
  gen_dump->add_option("--d", gen.d, "Rows per block")->capture_default_str();
  gen_dump->add_option("--r", gen.r, "Columns per block")->capture_default_str();
  gen_dump->add_option("--blocks", gen.blocks, "Number of blocks")->capture_default_str();
  gen_dump->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
  add_out(gen_dump);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    const auto subs = app.get_subcommands();
    return usage_error(app, subs.empty() ? &app : subs.front(), e, err);
  }

  try {
    const fs::path dir = out_dir;
    if (converge->parsed()) return cmd_converge(conv, dir, out, err);
    if (invert->parsed()) return cmd_bench(bench, dir, out, err);
    if (score->parsed()) return cmd_score(manifest, score_est, score_iter.settings(score_damp.resolve()), dir, out, err);
    if (detect->parsed()) return cmd_detect(det, p_grid, det_iter.settings(det_damp.resolve()), dir, out, err);
    if (select->parsed()) return cmd_select(sel, k_grid, sel_iter.settings(sel_damp.resolve()), dir, out, err);
    if (gen_dump->parsed()) return cmd_gen_dump(gen, dir, out);
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace hyperinf::cli
