// panda: command-line front end for training, search, data generation and
// graph diagnostics. Every results file is JSONL; diagnostics also write a
// two-column CSV. Wall-clock fields appear only with --timing so repeated
// runs produce identical bytes.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "panda/checkpoint.hpp"
#include "panda/diagnostics.hpp"
#include "panda/synth.hpp"
#include "panda/train.hpp"

using namespace panda;
using Json = nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------------------
// Config file
//
// `--config FILE` names a flat JSON object whose keys are long flag names
// without dashes. Its entries are spliced in ahead of the command-line flags;
// every single-valued option keeps its last occurrence, so flags win.
// ---------------------------------------------------------------------------

std::vector<std::string> config_tokens(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(1, std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw SchemaError("config must be a JSON object");
  std::vector<std::string> out;
  for (const auto& [key, value] : j.items()) {
    if (key == "config") throw SchemaError("config files cannot nest");
    const std::string flag = "--" + key;
    if (value.is_boolean()) {
      if (value.get<bool>()) out.push_back(flag);
    } else if (value.is_string()) {
      out.insert(out.end(), {flag, value.get<std::string>()});
    } else if (value.is_number()) {
      out.insert(out.end(), {flag, value.dump()});
    } else if (value.is_array()) {
      std::string joined;
      for (const auto& v : value) joined += (joined.empty() ? "" : ",") + (v.is_string() ? v.get<std::string>() : v.dump());
      out.insert(out.end(), {flag, joined});
    } else {
      throw SchemaError("config key '" + key + "' has an unsupported value");
    }
  }
  return out;
}

std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      args.erase(args.begin() + static_cast<long>(i), args.begin() + static_cast<long>(i) + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + static_cast<long>(i));
      break;
    }
  }
  if (path.empty()) return args;
  // after the subcommand chain
  std::size_t at = 1;
  while (at < args.size() && !args[at].empty() && args[at][0] != '-') ++at;
  auto extra = config_tokens(path);
  args.insert(args.begin() + static_cast<long>(at), extra.begin(), extra.end());
  return args;
}

// ---------------------------------------------------------------------------
// Output helpers
// ---------------------------------------------------------------------------

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path) {
    if (!out_) throw UsageError("cannot write " + path);
  }
  void line(const Json& j) { out_ << j.dump() << '\n' << std::flush; }
  void raw(const std::string& s) { out_ << s << std::flush; }

 private:
  std::ofstream out_;
};

std::string csv_path(const std::string& out, const std::string& csv) {
  if (!csv.empty()) return csv;
  return std::filesystem::path(out).replace_extension(".csv").string();
}

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::vector<std::size_t> parse_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw UsageError("bad integer list '" + s + "'");
    }
  }
  if (out.empty()) throw UsageError("empty list");
  return out;
}

std::vector<CentralityKind> parse_kinds(const std::string& s) {
  std::vector<CentralityKind> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_centrality(item));
  if (out.empty()) throw UsageError("empty centrality list");
  return out;
}

// ---------------------------------------------------------------------------
// Shared option groups
// ---------------------------------------------------------------------------

struct ModelFlags {
  std::string backbone = "panda-gcn";
  std::string centrality = "betweenness";
  std::size_t k = 3;
  std::size_t p_high = 128;
  std::size_t layers = 4;
  std::size_t p = 64;
  double dropout = 0.5;

  void add(CLI::App* app) {
    app->add_option("--backbone", backbone, "gcn | gin | panda-gcn | panda-gin")->capture_default_str();
    app->add_option("--centrality", centrality, "degree | betweenness | closeness | pagerank | load")->capture_default_str();
    app->add_option("--k", k, "number of expanded nodes")->capture_default_str();
    app->add_option("--p-high", p_high, "expanded width")->capture_default_str();
    app->add_option("--layers", layers)->capture_default_str();
    app->add_option("--p", p, "standard width")->capture_default_str();
    app->add_option("--dropout", dropout)->capture_default_str();
  }

  ModelSpec spec() const {
    ModelSpec s;
    s.backbone = parse_backbone(backbone);
    s.centrality = parse_centrality(centrality);
    s.k = k;
    s.p_high = p_high;
    s.layers = layers;
    s.p = p;
    s.dropout = dropout;
    return s;
  }
};

struct TrainFlags {
  TrainConfig cfg;
  bool timing = false;

  void add(CLI::App* app) {
    app->add_option("--lr", cfg.lr)->capture_default_str();
    app->add_option("--max-epochs", cfg.max_epochs)->capture_default_str();
    app->add_option("--patience", cfg.patience)->capture_default_str();
    app->add_option("--batch", cfg.batch, "graphs per optimizer step")->capture_default_str();
    app->add_option("--trials", cfg.trials)->capture_default_str();
    app->add_option("--seed", cfg.seed)->capture_default_str();
    app->add_flag("--timing", timing, "include wall-clock seconds in results");
  }

  TrainConfig config(const ModelFlags& m) const {
    TrainConfig c = cfg;
    c.layers = m.layers;
    c.p = m.p;
    c.dropout = m.dropout;
    c.validate();
    return c;
  }
};

Json trial_json(const TrialResult& r, bool timing) {
  Json j{{"type", "trial"},
         {"trial_seed", r.trial_seed},
         {"best_val_epoch", r.best_val_epoch},
         {"epochs_run", r.epochs_run},
         {"val_accuracy", r.val_accuracy},
         {"test_accuracy", r.test_accuracy}};
  if (timing) j["wall_time"] = r.wall_time;
  return j;
}

Json spec_json(const ModelSpec& s) {
  Json j{{"backbone", std::string(to_string(s.backbone))}, {"layers", s.layers}, {"p", s.p}, {"dropout", s.dropout}};
  if (is_panda(s.backbone)) {
    j["k"] = s.k;
    j["p_high"] = s.p_high;
    j["centrality"] = std::string(to_string(s.centrality));
  }
  return j;
}

void write_manifests(const std::string& dataset, std::size_t n, std::uint64_t first_seed, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) {
    const auto seed = first_seed + i;
    std::ofstream out(manifest_path(dataset, seed));
    if (!out) {
      std::cerr << "warning: cannot write split manifest next to " << dataset << "\n";
      return;
    }
    write_split_manifest(out, split_dataset(n, seed));
  }
}

Model diagnostic_model(const ModelFlags& m, const std::string& checkpoint, std::uint64_t seed,
                       const std::vector<GraphSample>& data) {
  if (!checkpoint.empty()) return load_checkpoint(checkpoint);
  ModelSpec s = m.spec();
  s.num_classes = std::max(2, num_classes(data));
  s.input_width = feature_width(data);
  s.validate();
  return Model::init(s, seed);
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

struct TrainCmd {
  std::string dataset, out, save_model;
  ModelFlags model;
  TrainFlags train;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("train", "run independent training trials");
    c->add_option("--dataset", dataset, "JSONL dataset")->required();
    c->add_option("--out", out, "results JSONL")->required();
    c->add_option("--save-model", save_model, "checkpoint of the first trial's selected model");
    model.add(c);
    train.add(c);
    c->callback([this] { run(); });
  }

  void run() {
    const auto data = load_dataset(dataset);
    const auto cfg = train.config(model);
    const auto spec = spec_for_dataset(cfg, model.spec(), data);
    spec.validate();
    write_manifests(dataset, data.size(), cfg.seed, cfg.trials);

    Writer w(out);
    auto on_row = [&](const TrialResult& r) {
      w.line(trial_json(r, train.timing));
      std::cerr << "trial seed " << r.trial_seed << ": test " << r.test_accuracy << " (best epoch " << r.best_val_epoch << ")\n";
    };
    Model first;
    Json summary{{"type", "summary"}, {"model", spec_json(spec)}, {"trials", cfg.trials}, {"seed", cfg.seed}};
    if (cfg.trials == 1) {
      CentralityCache cache;
      auto r = train_one(cfg, spec, data, cfg.seed, &cache, nullptr, &first);
      on_row(r);
      summary["mean"] = r.test_accuracy;
      summary["stderr"] = nullptr;
      summary["ci95"] = nullptr;
    } else {
      auto rep = run_trials(cfg, spec, data, cfg.trials, on_row, &first);
      summary["mean"] = rep.summary.mean;
      summary["stderr"] = rep.summary.stderr_;
      summary["ci95"] = rep.summary.half_width;
      std::cerr << to_string(spec.backbone) << ": " << format_ci(rep.summary) << " over " << cfg.trials << " trials\n";
    }
    w.line(summary);
    if (!save_model.empty()) save_checkpoint(save_model, first);
  }
};

struct GridCmd {
  std::string dataset, out;
  std::string p_high_grid = "80,96,112,128";
  std::string k_grid = "1,3,5,7,10,15,20";
  std::string centrality_grid = "degree,betweenness,closeness,pagerank,load";
  ModelFlags model;
  TrainFlags train;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("grid", "exhaustive (p_high, k, centrality) search on validation accuracy");
    c->add_option("--dataset", dataset)->required();
    c->add_option("--out", out, "one JSONL row per point plus a trailing best record")->required();
    c->add_option("--p-high-grid", p_high_grid)->capture_default_str();
    c->add_option("--k-grid", k_grid)->capture_default_str();
    c->add_option("--centrality-grid", centrality_grid)->capture_default_str();
    model.add(c);
    train.add(c);
    c->callback([this] { run(); });
  }

  void run() {
    const auto data = load_dataset(dataset);
    const auto cfg = train.config(model);
    auto base = spec_for_dataset(cfg, model.spec(), data);
    if (!is_panda(base.backbone)) throw UsageError("grid search needs a panda backbone");
    SearchSpace space{parse_sizes(p_high_grid), parse_sizes(k_grid), parse_kinds(centrality_grid)};
    write_manifests(dataset, data.size(), cfg.seed, 1);

    Writer w(out);
    auto row = [](const GridPoint& pt, const char* type) {
      return Json{{"type", type},
                  {"p_high", pt.p_high},
                  {"k", pt.k},
                  {"centrality", std::string(to_string(pt.centrality))},
                  {"val_accuracy", pt.val_accuracy},
                  {"best_val_epoch", pt.best_val_epoch}};
    };
    auto res = grid_search(space, cfg, base, data, nullptr, [&](const GridPoint& pt) { w.line(row(pt, "point")); });
    auto best = row(res.best, "best");
    best["points"] = res.evaluated.size();
    w.line(best);
    std::cerr << "best: p_high " << res.best.p_high << ", k " << res.best.k << ", " << to_string(res.best.centrality)
              << " (val " << res.best.val_accuracy << ")\n";
  }
};

struct SynthCmd {
  SynthConfig cfg;
  std::string family = "barbell", out;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("synth", "generate a synthetic long-range dataset");
    c->add_option("--family", family, "barbell | tree | ring-of-cliques")->capture_default_str();
    c->add_option("--count", cfg.count)->capture_default_str();
    c->add_option("--size-min", cfg.size_min, "clique size, or tree node count")->capture_default_str();
    c->add_option("--size-max", cfg.size_max)->capture_default_str();
    c->add_option("--bridge-min", cfg.bridge_min)->capture_default_str();
    c->add_option("--bridge-max", cfg.bridge_max)->capture_default_str();
    c->add_option("--ring-cliques", cfg.ring_cliques)->capture_default_str();
    c->add_option("--attributes", cfg.attributes)->capture_default_str();
    c->add_option("--distance", cfg.distance, "label distance from the source; -1 = eccentricity")->capture_default_str();
    c->add_option("--seed", cfg.seed)->capture_default_str();
    c->add_option("--out", out)->required();
    c->callback([this] { run(); });
  }

  void run() {
    cfg.family = parse_family(family);
    save_dataset(out, synth_generate(cfg));
  }
};

struct CentralityCmd {
  std::string dataset, out, kind = "betweenness";
  std::size_t k = 3;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("centrality", "per-graph centrality values and top-k node ids");
    c->add_option("--dataset", dataset)->required();
    c->add_option("--kind", kind)->capture_default_str();
    c->add_option("--k", k)->capture_default_str();
    c->add_option("--out", out)->required();
    c->callback([this] { run(); });
  }

  void run() {
    const auto data = load_dataset(dataset);
    const auto kk = parse_centrality(kind);
    Writer w(out);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto c = compute_centrality(data[i].graph, kk);
      w.line(Json{{"graph_id", i}, {"values", c.values}, {"topk_ids", build_mask(c, k).expanded_ids}});
    }
  }
};

struct DiagnoseCmd {
  std::string dataset, out, csv, checkpoint;
  std::uint64_t seed = 0;
  ModelFlags model;
  // sensitivity / bound
  std::size_t ell = 2;
  std::size_t pairs = 64;
  std::string norm = "entrywise";
  double z = 1.0, w = 1.0;
  // signal
  std::size_t sources = 10;

  void common(CLI::App* c) {
    c->add_option("--dataset", dataset)->required();
    c->add_option("--out", out, "JSONL report")->required();
    c->add_option("--csv", csv, "two-column CSV (default: --out with .csv)");
    c->add_option("--seed", seed)->capture_default_str();
  }

  void with_model(CLI::App* c) {
    model.add(c);
    c->add_option("--checkpoint", checkpoint, "use a saved model instead of a random init");
  }

  void add(CLI::App& app) {
    auto* d = app.add_subcommand("diagnose", "graph and model diagnostics");
    d->require_subcommand(1);

    auto* r = d->add_subcommand("resistance", "total effective resistance per graph");
    common(r);
    r->callback([this] { resistance(); });

    auto* e = d->add_subcommand("dirichlet", "Dirichlet energy of input and output node features");
    common(e);
    with_model(e);
    e->callback([this] { dirichlet(); });

    auto* s = d->add_subcommand("sensitivity", "empirical Jacobian sensitivity against the bound");
    common(s);
    with_model(s);
    s->add_option("--ell", ell)->capture_default_str();
    s->add_option("--pairs", pairs, "pairs sampled per graph")->capture_default_str();
    s->add_option("--norm", norm, "entrywise | induced")->capture_default_str();
    s->callback([this] { sensitivity(); });

    auto* g = d->add_subcommand("signal", "signal propagation against total effective resistance");
    common(g);
    with_model(g);
    g->add_option("--sources", sources)->capture_default_str();
    g->callback([this] { signal(); });

    auto* b = d->add_subcommand("bound", "sensitivity bound per node pair");
    common(b);
    b->add_option("--ell", ell)->capture_default_str();
    b->add_option("--pairs", pairs)->capture_default_str();
    b->add_option("--z", z)->capture_default_str();
    b->add_option("--w", w)->capture_default_str();
    b->add_option("--p", model.p)->capture_default_str();
    b->callback([this] { bound(); });
  }

  // {graph_id, num_nodes, r_tot, normalized_r_tot}; r_tot null when disconnected.
  // CSV: graph_id,r_tot
  void resistance() {
    const auto data = load_dataset(dataset);
    std::vector<double> finite;
    std::vector<std::optional<double>> r(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      try {
        r[i] = total_effective_resistance(data[i].graph);
        finite.push_back(*r[i]);
      } catch (const InfiniteResistance&) {
      }
    }
    const auto norm_r = min_max_normalize(finite);
    Writer jw(out), cw(csv_path(out, csv));
    cw.raw("graph_id,r_tot\n");
    std::size_t f = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      Json j{{"graph_id", i}, {"num_nodes", data[i].graph.num_nodes()}};
      if (r[i]) {
        j["r_tot"] = *r[i];
        j["normalized_r_tot"] = norm_r[f++];
      } else {
        j["r_tot"] = nullptr;
        j["normalized_r_tot"] = nullptr;
      }
      jw.line(j);
      cw.raw(std::to_string(i) + "," + (r[i] ? num(*r[i]) : "inf") + "\n");
    }
  }

  // {graph_id, input_energy, output_energy}; output = reunified node features
  // after all layers in eval mode. CSV: input_energy,output_energy
  void dirichlet() {
    const auto data = load_dataset(dataset);
    const Model m = diagnostic_model(model, checkpoint, seed, data);
    Writer jw(out), cw(csv_path(out, csv));
    cw.raw("input_energy,output_energy\n");
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto& s = data[i];
      if (s.graph.num_nodes() == 0) continue;
      auto g = prepare_graph(s, mask_for(m.spec, s.graph));
      ad::Tape tape;
      ParamBinding P(tape, m.params);
      auto h = run_layers(P, m.spec, encode(P, m.spec, g, tape.constant(s.features)), g, m.spec.layers, nullptr);
      const Matrix H = reunify(P, h, m.spec.layers).value();
      const double e_in = dirichlet_energy(s.graph, s.features);
      const double e_out = dirichlet_energy(s.graph, H);
      jw.line(Json{{"graph_id", i}, {"input_energy", e_in}, {"output_energy", e_out}});
      cw.raw(num(e_in) + "," + num(e_out) + "\n");
    }
  }

  // {graph_id, v, u, distance, empirical, bound}; bound is null for panda
  // backbones. CSV: bound,empirical
  void sensitivity() {
    const auto data = load_dataset(dataset);
    const Model m = diagnostic_model(model, checkpoint, seed, data);
    SensitivityOptions opt;
    opt.num_pairs = pairs;
    opt.seed = seed;
    if (norm == "entrywise") {
      opt.norm = JacobianNorm::entrywise;
    } else if (norm == "induced") {
      opt.norm = JacobianNorm::induced;
    } else {
      throw UsageError("unknown norm '" + norm + "'");
    }
    const bool has_bound = !is_panda(m.spec.backbone) && ell >= 1;
    const SensitivityBoundParams bp{1.0, max_layer_weight(m.params, ell), static_cast<double>(m.spec.p), ell};
    Writer jw(out), cw(csv_path(out, csv));
    cw.raw("bound,empirical\n");
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto& graph = data[i].graph;
      if (graph.num_nodes() == 0) continue;
      const auto S = ShiftMatrix::build(graph, ShiftKind::sym_normalized_self_loops);
      const auto rep = empirical_sensitivity(m, graph, ell, opt);
      for (const auto& pr : rep.pairs) {
        Json j{{"graph_id", i}, {"v", pr.v}, {"u", pr.u}, {"distance", shortest_path_lengths(graph, pr.v)[pr.u]}, {"empirical", pr.value}};
        if (has_bound) {
          const double b = sensitivity_bound(bp, S, pr.v, pr.u);
          j["bound"] = b;
          cw.raw(num(b) + "," + num(pr.value) + "\n");
        } else {
          j["bound"] = nullptr;
          cw.raw("nan," + num(pr.value) + "\n");
        }
        jw.line(j);
      }
    }
  }

  // {graph_id, num_nodes, r_tot, normalized_r_tot, h_odot} per connected graph
  // with at least two nodes, then {type: "correlation", pearson, spearman,
  // graphs, skipped}. CSV: normalized_r_tot,h_odot
  void signal() {
    const auto data = load_dataset(dataset);
    const Model m = diagnostic_model(model, checkpoint, seed, data);
    std::vector<SignalRecord> rows;
    std::size_t skipped = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      try {
        auto sm = signal_propagation(m, data[i].graph, SignalOptions{sources, derive_seed(seed, i)});
        rows.push_back({i, sm.r_tot, 0.0, sm.h_odot});
      } catch (const InfiniteResistance&) {
        ++skipped;
      } catch (const SizeError&) {
        ++skipped;
      }
    }
    const auto rep = resistance_propagation_correlation(rows);
    Writer jw(out), cw(csv_path(out, csv));
    cw.raw("normalized_r_tot,h_odot\n");
    for (const auto& r : rep.records) {
      jw.line(Json{{"graph_id", r.graph_id},
                   {"num_nodes", data[r.graph_id].graph.num_nodes()},
                   {"r_tot", r.r_tot},
                   {"normalized_r_tot", r.normalized_r_tot},
                   {"h_odot", r.h_odot}});
      cw.raw(num(r.normalized_r_tot) + "," + num(r.h_odot) + "\n");
    }
    jw.line(Json{{"type", "correlation"},
                 {"pearson", rep.pearson},
                 {"spearman", rep.spearman},
                 {"graphs", rep.records.size()},
                 {"skipped", skipped}});
  }

  // {graph_id, v, u, distance, bound} over sampled pairs within ell.
  // CSV: distance,bound
  void bound() {
    const auto data = load_dataset(dataset);
    const SensitivityBoundParams bp{z, w, static_cast<double>(model.p), ell};
    Writer jw(out), cw(csv_path(out, csv));
    cw.raw("distance,bound\n");
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto& graph = data[i].graph;
      const auto S = ShiftMatrix::build(graph, ShiftKind::sym_normalized_self_loops);
      Rng rng(derive_seed(seed, i));
      for (const auto& [v, u] : detail::pairs_within(graph, ell, pairs, rng)) {
        const auto d = shortest_path_lengths(graph, v)[u];
        const double b = sensitivity_bound(bp, S, v, u);
        jw.line(Json{{"graph_id", i}, {"v", v}, {"u", u}, {"distance", d}, {"bound", b}});
        cw.raw(std::to_string(d) + "," + num(b) + "\n");
      }
    }
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PANDA graph neural network experiments"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.add_option("--config", "JSON file whose keys mirror the long flags; flags override it");

  TrainCmd train;
  GridCmd grid;
  SynthCmd synth;
  CentralityCmd centrality;
  DiagnoseCmd diagnose;
  train.add(app);
  grid.add(app);
  synth.add(app);
  centrality.add(app);
  diagnose.add(app);

  try {
    auto args = expand_config(argc, argv);
    std::vector<char*> ptrs;
    for (auto& a : args) ptrs.push_back(a.data());
    app.parse(static_cast<int>(ptrs.size()), ptrs.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const panda::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
