// Command-line front end: data generation, single-model workflow and sweeps.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "mvcs/baselines.hpp"
#include "mvcs/conformal.hpp"
#include "mvcs/datagen.hpp"
#include "mvcs/harness.hpp"
#include "mvcs/serialize.hpp"

using namespace mvcs;
namespace fs = std::filesystem;

namespace {

struct Columns {
  std::vector<std::string> x, y;
};

// Explicit lists win; otherwise columns named x* and y* are used.
Columns resolve_columns(const std::string& path, std::vector<std::string> x, std::vector<std::string> y) {
  const bool auto_x = x.empty(), auto_y = y.empty();
  if (auto_x || auto_y) {
    for (const auto& name : csv_header(path)) {
      if (auto_x && !name.empty() && name[0] == 'x') x.push_back(name);
      if (auto_y && !name.empty() && name[0] == 'y') y.push_back(name);
    }
  }
  if (x.empty() || y.empty()) throw std::runtime_error(path + ": cannot find x*/y* columns; pass --x-cols/--y-cols");
  return {x, y};
}

Dataset select(const Splits& s, const std::string& which, const Dataset& all) {
  if (which == "train") return s.train;
  if (which == "val") return s.val;
  if (which == "calib") return s.calib;
  if (which == "test") return s.test;
  if (which == "all") return all;
  throw std::invalid_argument("unknown split '" + which + "'");
}

// Rebuilds the split recorded in a checkpoint and applies its transform.
Dataset checkpoint_split(const Checkpoint& ck, const std::string& data_path, const std::string& which,
                         std::vector<std::string> xc, std::vector<std::string> yc) {
  if (xc.empty() && ck.meta.contains("x_columns")) xc = ck.meta.at("x_columns").get<std::vector<std::string>>();
  if (yc.empty() && ck.meta.contains("y_columns")) yc = ck.meta.at("y_columns").get<std::vector<std::string>>();
  const Columns cols = resolve_columns(data_path, xc, yc);
  const Dataset all = load_csv(data_path, cols.x, cols.y);
  const SplitSpec spec = ck.meta.contains("split") ? split_spec_from_json(ck.meta.at("split")) : SplitSpec{};
  Dataset d = which == "all" ? all : select(split(all, spec), which, all);
  return ck.transform.empty() ? d : ck.transform.apply(d);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Minimum-volume conformal prediction sets"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset as CSV plus a JSON sidecar");
  std::string gen_source = "synthetic", gen_out = "data.csv", gen_config;
  std::size_t gen_n = 6000;
  int gen_d = 4, gen_k = 4, gen_anchors = 4;
  std::uint64_t gen_seed = 0;
  std::string gen_noise = "exponential";
  bool gen_varying = false;
  double gen_outliers = -1.0, gen_alpha = 0.1;
  gen->add_option("--source", gen_source, "synthetic or oned")->check(CLI::IsMember({"synthetic", "oned"}));
  gen->add_option("--config", gen_config, "JSON synthetic config (overrides the shape flags)");
  gen->add_option("-n,--n", gen_n, "Number of samples");
  gen->add_option("--d", gen_d, "Covariate dimension");
  gen->add_option("--k", gen_k, "Response dimension");
  gen->add_option("--anchors", gen_anchors, "Rotation anchors");
  gen->add_option("--noise", gen_noise)->check(CLI::IsMember({"gaussian", "exponential"}));
  gen->add_flag("--varying", gen_varying, "Covariate-dependent transform instead of the fixed one");
  gen->add_option("--outlier-fraction", gen_outliers, "1D data: outlier fraction (default 3 alpha / 4)");
  gen->add_option("--alpha", gen_alpha, "1D data: target miscoverage for the default outlier fraction");
  gen->add_option("--seed", gen_seed);
  gen->add_option("-o,--out", gen_out, "CSV path; the sidecar is written next to it with a .json extension");

  // train
  auto* tr = app.add_subcommand("train", "Fit one method on the train/val splits of a CSV");
  std::string tr_data, tr_method = "mvcs_adaptive", tr_config, tr_out = "model.json", tr_pre = "quantile";
  std::vector<std::string> x_cols, y_cols;
  double tr_alpha = 0.1;
  std::uint64_t tr_seed = 0;
  tr->add_option("--data", tr_data, "Input CSV")->required()->check(CLI::ExistingFile);
  tr->add_option("--method", tr_method)->check(CLI::IsMember(known_methods()));
  tr->add_option("--config", tr_config, "JSON with TrainConfig and optional split fields");
  tr->add_option("--alpha", tr_alpha);
  tr->add_option("--seed", tr_seed, "Seed for the split and the networks");
  tr->add_option("--preprocess", tr_pre)->check(CLI::IsMember({"quantile", "none"}));
  tr->add_option("--x-cols", x_cols);
  tr->add_option("--y-cols", y_cols);
  tr->add_option("-o,--out", tr_out, "Checkpoint path");

  // calibrate
  auto* cal = app.add_subcommand("calibrate", "Set the conformal threshold of a checkpoint");
  std::string cal_model, cal_data, cal_split = "calib", cal_out;
  cal->add_option("--model", cal_model)->required()->check(CLI::ExistingFile);
  cal->add_option("--data", cal_data)->required()->check(CLI::ExistingFile);
  cal->add_option("--split", cal_split, "Which split of --data to use (or all)");
  cal->add_option("--x-cols", x_cols);
  cal->add_option("--y-cols", y_cols);
  cal->add_option("-o,--out", cal_out, "Output checkpoint (default: overwrite --model)");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Coverage and normalized volume of a calibrated checkpoint");
  std::string ev_model, ev_data, ev_split = "test", ev_out;
  int ev_bins = 0;
  ev->add_option("--model", ev_model)->required()->check(CLI::ExistingFile);
  ev->add_option("--data", ev_data)->required()->check(CLI::ExistingFile);
  ev->add_option("--split", ev_split);
  ev->add_option("--bins", ev_bins, "Also report coverage in this many bins of x0");
  ev->add_option("--x-cols", x_cols);
  ev->add_option("--y-cols", y_cols);
  ev->add_option("-o,--out", ev_out, "JSON report path (default: stdout)");

  // sweep
  auto* sw = app.add_subcommand("sweep", "Repeated runs of an experiment config, then tables");
  std::string sw_config, sw_out;
  std::optional<double> sw_alpha;
  std::optional<std::uint64_t> sw_seed;
  std::optional<int> sw_runs;
  sw->add_option("--config", sw_config, "Experiment JSON")->required()->check(CLI::ExistingFile);
  sw->add_option("--alpha", sw_alpha);
  sw->add_option("--seed", sw_seed, "Base seed");
  sw->add_option("--runs", sw_runs);
  sw->add_option("--out", sw_out, "Output directory");

  // table
  auto* tb = app.add_subcommand("table", "Aggregate JSON-lines records into text and CSV tables");
  std::vector<std::string> tb_records;
  std::string tb_out;
  tb->add_option("records", tb_records, "records.jsonl files")->required()->check(CLI::ExistingFile);
  tb->add_option("--out", tb_out, "Directory for table.txt and table.csv (default: print only)");

  // plotdata
  auto* pl = app.add_subcommand("plotdata", "Boundary traces and sample scatter for plotting");
  std::string pl_model, pl_data, pl_split = "test", pl_out = "boundary.csv", pl_samples;
  int pl_points = 5, pl_res = 720;
  pl->add_option("--model", pl_model)->required()->check(CLI::ExistingFile);
  pl->add_option("--data", pl_data)->required()->check(CLI::ExistingFile);
  pl->add_option("--split", pl_split);
  pl->add_option("--points", pl_points, "Number of covariate rows to trace");
  pl->add_option("--resolution", pl_res, "Angular samples per trace");
  pl->add_option("--x-cols", x_cols);
  pl->add_option("--y-cols", y_cols);
  pl->add_option("-o,--out", pl_out, "Boundary CSV");
  pl->add_option("--samples", pl_samples, "Also write the split's (transformed) samples here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const fs::path out(gen_out);
      Json sidecar;
      if (gen_source == "synthetic") {
        SyntheticConfig sc;
        if (!gen_config.empty()) {
          sc = synthetic_config_from_json(read_json_file(gen_config));
        } else {
          sc.d = gen_d;
          sc.k = gen_k;
          sc.n = gen_n;
          sc.anchors = gen_anchors;
          sc.noise = gen_noise == "gaussian" ? NoiseKind::gaussian : NoiseKind::exponential;
          sc.transform_fixed = !gen_varying;
          sc.seed = gen_seed;
        }
        write_csv(gen_multivariate(sc), out.string());
        sidecar = synthetic_config_to_json(sc);
      } else {
        const double frac = gen_outliers >= 0.0 ? gen_outliers : contamination_fraction(gen_alpha);
        const OneDimData od = gen_1d(frac, gen_n, gen_seed);
        write_csv(od.data, out.string());
        sidecar = {{"source", "oned"}, {"n", gen_n}, {"outlier_fraction", frac}, {"seed", gen_seed},
                   {"outlier_rows", od.outliers}};
      }
      fs::path side = out;
      side.replace_extension(".json");
      write_json_file(sidecar, side.string());
      std::cout << "wrote " << out.string() << " and " << side.string() << "\n";
    } else if (*tr) {
      Json cfg_json = tr_config.empty() ? Json::object() : read_json_file(tr_config);
      TrainConfig cfg = train_config_from_json(cfg_json);
      SplitSpec spec = cfg_json.contains("split") ? split_spec_from_json(cfg_json.at("split")) : SplitSpec{};
      if (tr->count("--alpha") || !cfg_json.contains("alpha")) cfg.alpha = tr_alpha;
      if (tr->count("--seed") || !cfg_json.contains("seed")) cfg.seed = tr_seed;
      spec.seed = cfg.seed;
      const Columns cols = resolve_columns(tr_data, x_cols, y_cols);
      const Dataset all = load_csv(tr_data, cols.x, cols.y);
      RunData rd;
      rd.splits = split(all, spec);
      if (tr_pre == "quantile") {
        rd.transform = DatasetTransform::fit(rd.splits.train);
        for (Dataset* d : {&rd.splits.train, &rd.splits.val, &rd.splits.calib, &rd.splits.test})
          *d = rd.transform.apply(*d);
      }
      Checkpoint ck;
      // fit_method calibrates on the calib split as well; `calibrate` can redo that on other data.
      ck.predictor = fit_method(tr_method, rd, cfg, nullptr);
      ck.transform = rd.transform;
      ck.alpha = cfg.alpha;
      ck.meta = {{"data", tr_data}, {"x_columns", cols.x}, {"y_columns", cols.y},
                 {"split", split_spec_to_json(spec)}, {"train", train_config_to_json(cfg)}};
      save_checkpoint(ck, tr_out);
      std::cout << "wrote " << tr_out << " (" << ck.predictor->method() << ", q_hat " << *ck.predictor->q_hat
                << ")\n";
    } else if (*cal) {
      Checkpoint ck = load_checkpoint(cal_model);
      const Dataset d = checkpoint_split(ck, cal_data, cal_split, x_cols, y_cols);
      calibrate(*ck.predictor, d, ck.alpha);
      const std::string out = cal_out.empty() ? cal_model : cal_out;
      save_checkpoint(ck, out);
      std::cout << "q_hat = " << *ck.predictor->q_hat << " from " << d.size() << " points; wrote " << out << "\n";
    } else if (*ev) {
      const Checkpoint ck = load_checkpoint(ev_model);
      const Dataset d = checkpoint_split(ck, ev_data, ev_split, x_cols, y_cols);
      const EvalReport rep = evaluate(*ck.predictor, d);
      Json j = eval_report_to_json(rep);
      j["method"] = ck.predictor->method();
      j["alpha"] = ck.alpha;
      if (const auto* a = dynamic_cast<const AdaptivePredictor*>(ck.predictor.get())) j["learned_p"] = a->p();
      if (ev_bins > 0) {
        const BinnedCoverage b = binned_conditional_coverage(*ck.predictor, d, ev_bins);
        j["binned"] = {{"coverage", b.coverage}, {"counts", b.counts}, {"lower_edges", b.lower_edges},
                       {"flagged", b.flagged}};
      }
      if (ev_out.empty()) {
        std::cout << j.dump(2) << "\n";
      } else {
        write_json_file(j, ev_out);
      }
    } else if (*sw) {
      Json j = read_json_file(sw_config);
      if (sw_alpha) j["alpha"] = *sw_alpha;
      if (sw_seed) j["base_seed"] = *sw_seed;
      if (sw_runs) j["n_runs"] = *sw_runs;
      if (!sw_out.empty()) j["output_dir"] = sw_out;
      ExperimentConfig cfg = experiment_config_from_json(j);
      if (cfg.output_dir.empty()) cfg.output_dir = "results/" + cfg.name;
      fs::create_directories(cfg.output_dir);
      write_json_file(experiment_config_to_json(cfg), (fs::path(cfg.output_dir) / "config.json").string());
      const auto records = run_experiment(cfg, &std::cerr);
      const auto rows = aggregate(records);
      emit_table(rows, cfg.output_dir);
      std::cout << format_table(rows);
    } else if (*tb) {
      std::vector<RunRecord> all;
      for (const auto& p : tb_records) {
        auto r = load_records(p);
        all.insert(all.end(), r.begin(), r.end());
      }
      const auto rows = aggregate(all);
      if (!tb_out.empty()) emit_table(rows, tb_out);
      std::cout << format_table(rows);
    } else if (*pl) {
      const Checkpoint ck = load_checkpoint(pl_model);
      if (!ck.predictor->q_hat) throw std::runtime_error("plotdata: checkpoint is not calibrated");
      const Dataset d = checkpoint_split(ck, pl_data, pl_split, x_cols, y_cols);
      const auto rows = std::min<Eigen::Index>(pl_points, d.x.rows());
      emit_plot_data(*ck.predictor, d.x.topRows(rows), *ck.predictor->q_hat, pl_out, pl_res);
      if (!pl_samples.empty()) write_csv(d, pl_samples);
      std::cout << "wrote " << pl_out << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
