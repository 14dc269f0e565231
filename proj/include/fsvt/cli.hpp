#pragma once

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fsvt/dataset.hpp"
#include "fsvt/eval.hpp"
#include "fsvt/plot.hpp"

namespace fsvt {

namespace cli_detail {

// Seed precedence: config file < FSVT_SEED < --seed.
inline std::uint64_t resolve_seed(std::uint64_t config_seed, const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("FSVT_SEED")) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      require(used == std::string(env).size(), "invalid_argument", "");
      return v;
    } catch (const std::exception&) {
      throw Error("invalid_argument", std::string("FSVT_SEED is not an unsigned integer: '") + env + "'");
    }
  }
  return config_seed;
}

inline void require_file(const std::string& path, const std::string& what) {
  require(std::filesystem::exists(path), "missing_file", what + " '" + path + "' does not exist");
}

struct TrainFlags {
  std::string data, out, config, loss_csv;
  std::optional<int> epochs, batch;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;
  bool no_augment = false;

  void add(CLI::App* app) {
    app->add_option("--data", data, "dataset directory")->required();
    app->add_option("--out", out, "checkpoint to write")->required();
    app->add_option("--config", config, "key = value config file");
    app->add_option("--epochs", epochs);
    app->add_option("--batch", batch);
    app->add_option("--lr", lr);
    app->add_option("--seed", seed);
    app->add_option("--loss-csv", loss_csv);
    app->add_flag("--no-augment", no_augment);
  }

  TrainConfig resolve() const {
    TrainConfig cfg;
    if (!config.empty()) {
      require_file(config, "config");
      cfg = TrainConfig::from_kv(KeyValues::load(config), cfg);
    }
    if (epochs) {
      cfg.epochs = *epochs;
      cfg.decay_start_epoch = std::min(cfg.decay_start_epoch, cfg.epochs);
      if (config.empty()) cfg.decay_start_epoch = cfg.epochs / 2;
    }
    if (batch) cfg.batch_size = *batch;
    if (lr) cfg.lr0 = *lr;
    if (no_augment) cfg.augment = false;
    cfg.seed = resolve_seed(cfg.seed, seed);
    cfg.data = data;
    cfg.checkpoint = out;
    if (!loss_csv.empty()) cfg.loss_csv = loss_csv;
    return cfg;
  }
};

inline Dataset load_data(const std::string& dir) {
  require(std::filesystem::is_directory(dir), "missing_file", "dataset directory '" + dir + "' does not exist");
  return load_dataset(dir);
}

// Dataset resolution drives the model resolution.
inline void fit_resolution(TrainConfig& cfg, const Dataset& d) {
  cfg.model.height = d.config.height;
  cfg.model.width = d.config.width;
}

}  // namespace cli_detail

// Runs the command line; returns the process exit code. Failures print one
// line "error: <code>: <message>" to err.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using namespace cli_detail;
  CLI::App app{"flow-based virtual try-on toolkit", "fsvt"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  std::string gen_out;
  std::size_t gen_count = 0;
  std::optional<std::size_t> gen_test;
  std::optional<std::uint64_t> gen_seed;
  int gen_h = 64, gen_w = 48, gen_levels = 5;
  gen->add_option("--out", gen_out)->required();
  gen->add_option("--count", gen_count, "total number of samples")->required()->check(CLI::PositiveNumber);
  gen->add_option("--test", gen_test, "held-out samples among --count (default count/5)");
  gen->add_option("--seed", gen_seed);
  gen->add_option("--height", gen_h);
  gen->add_option("--width", gen_w);
  gen->add_option("--levels", gen_levels, "pyramid depth the resolution must support");

  auto* tt = app.add_subcommand("train-teacher", "train the parser-based teacher");
  TrainFlags tt_flags;
  tt_flags.add(tt);

  auto* ts = app.add_subcommand("train-student", "distill the parser-free student");
  TrainFlags ts_flags;
  ts_flags.add(ts);
  std::string ts_teacher, ts_resume;
  bool no_sm = false, no_rf = false;
  ts->add_option("--teacher", ts_teacher, "teacher checkpoint")->required();
  ts->add_option("--resume", ts_resume, "student checkpoint to continue");
  ts->add_flag("--no-sm", no_sm, "disable the style-modulated coarse head");
  ts->add_flag("--no-rf", no_rf, "disable the refinement head");

  auto* ev = app.add_subcommand("evaluate", "write an evaluation report");
  std::string ev_ckpt, ev_data, ev_out;
  std::optional<std::uint64_t> ev_seed;
  bool ev_oracle = false;
  ev->add_option("--ckpt", ev_ckpt)->required();
  ev->add_option("--data", ev_data)->required();
  ev->add_option("--out", ev_out)->required();
  ev->add_option("--seed", ev_seed);
  ev->add_flag("--oracle-flow", ev_oracle, "inject the ground-truth flow");

  auto* inf = app.add_subcommand("infer", "try a garment on a person image");
  std::string in_person, in_garment, in_ckpt, in_out, in_flow;
  inf->add_option("--person", in_person)->required();
  inf->add_option("--garment", in_garment)->required();
  inf->add_option("--ckpt", in_ckpt)->required();
  inf->add_option("--out", in_out)->required();
  inf->add_option("--dump-flow", in_flow, "write the estimated flow (FLO1)");

  auto* pl = app.add_subcommand("plot", "render try-on grids and loss curves");
  std::string pl_ckpt, pl_data, pl_grid, pl_curve;
  int pl_rows = 4;
  pl->add_option("--ckpt", pl_ckpt)->required();
  pl->add_option("--data", pl_data);
  pl->add_option("--grid", pl_grid, "try-on grid PNG (needs --data)");
  pl->add_option("--curve", pl_curve, "loss-curve PNG");
  pl->add_option("--rows", pl_rows)->check(CLI::PositiveNumber);

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return 0;
    } catch (const CLI::CallForAllHelp&) {
      out << app.help("", CLI::AppFormatMode::All);
      return 0;
    } catch (const CLI::ParseError& e) {
      err << "error: usage: " << e.what() << '\n';
      return 2;
    }

    if (gen->parsed()) {
      const std::size_t test = gen_test.value_or(gen_count / 5);
      require(test <= gen_count, "invalid_argument", "--test exceeds --count");
      DataConfig dc;
      dc.height = gen_h;
      dc.width = gen_w;
      dc.levels = gen_levels;
      const Dataset d = generate_dataset(dc, gen_count - test, test, resolve_seed(0, gen_seed));
      write_dataset(gen_out, d);
      out << "wrote " << gen_count << " samples (" << test << " held out) to " << gen_out << '\n';
    } else if (tt->parsed()) {
      const Dataset d = load_data(tt_flags.data);
      TrainConfig cfg = tt_flags.resolve();
      fit_resolution(cfg, d);
      TrainState st = train_teacher(d.train, cfg);
      out << "teacher: " << st.epoch << " epochs, final total loss " << st.curve.back().total << '\n';
    } else if (ts->parsed()) {
      const Dataset d = load_data(ts_flags.data);
      require_file(ts_teacher, "teacher checkpoint");
      TrainState teacher = resume_state(ts_teacher);
      require(teacher.stage == Stage::teacher, "checkpoint_mismatch", ts_teacher + " is not a teacher checkpoint");
      TrainState st;
      if (!ts_resume.empty()) {
        require_file(ts_resume, "student checkpoint");
        st = resume_state(ts_resume);
        require(st.stage == Stage::student, "checkpoint_mismatch", ts_resume + " is not a student checkpoint");
        if (ts_flags.epochs) st.config.epochs = *ts_flags.epochs;
        st.config.checkpoint = ts_flags.out;
        if (!ts_flags.loss_csv.empty()) st.config.loss_csv = ts_flags.loss_csv;
        st.config.validate();
      } else {
        TrainConfig cfg = ts_flags.resolve();
        fit_resolution(cfg, d);
        cfg.model.flow.use_sm = !no_sm;
        cfg.model.flow.use_rf = !no_rf;
        cfg.teacher_checkpoint = ts_teacher;
        st = TrainState::fresh(Stage::student, cfg);
      }
      continue_training(st, d.train, &teacher.model);
      out << "student: " << st.epoch << " epochs, final total loss " << st.curve.back().total << '\n';
    } else if (ev->parsed()) {
      require_file(ev_ckpt, "checkpoint");
      const Dataset d = load_data(ev_data);
      require(!d.test.empty(), "empty_dataset", ev_data + " has no held-out samples");
      EvalOptions opt;
      opt.seed = resolve_seed(d.seed, ev_seed);
      opt.oracle_flow = ev_oracle;
      const EvalReport r = eval_checkpoint(ev_ckpt, d.test, opt);
      r.save(ev_out);
      const auto& a = r.splits.at("aligned");
      out << r.variant << " aligned: ssim " << a.ssim_mean << ", masked epe " << a.epe_masked_px << " px\n";
    } else if (inf->parsed()) {
      require_file(in_person, "person image");
      require_file(in_garment, "garment image");
      require_file(in_ckpt, "checkpoint");
      TryOnModel<float> m = load_model(in_ckpt);
      require(m.config.person_channels == 3, "checkpoint_mismatch",
              "infer needs a student checkpoint; teachers take semantic maps");
      SyntheticSample s;
      s.person = load_png(in_person);
      s.garment = load_png(in_garment);
      require(s.person.shape() == s.garment.shape(), "shape_mismatch", "person and garment sizes differ");
      const Inference r = infer(m, s);
      save_png(in_out, r.tryon);
      if (!in_flow.empty()) flo::save(in_flow, r.flow);
      out << "wrote " << in_out << '\n';
    } else if (pl->parsed()) {
      require(!pl_grid.empty() || !pl_curve.empty(), "invalid_argument", "plot needs --grid and/or --curve");
      require_file(pl_ckpt, "checkpoint");
      TrainState st = resume_state(pl_ckpt);
      if (!pl_curve.empty()) plot_loss_curves(pl_curve, st.curve);
      if (!pl_grid.empty()) {
        require(!pl_data.empty(), "invalid_argument", "--grid needs --data");
        const Dataset d = load_data(pl_data);
        const auto& src = d.test.empty() ? d.train : d.test;
        require(!src.empty(), "empty_dataset", pl_data + " has no samples");
        std::vector<GridRow> rows;
        for (int i = 0; i < pl_rows && i < static_cast<int>(src.size()); ++i) {
          const Inference r = infer(st.model, src[i]);
          rows.push_back({src[i].person, src[i].garment, r.warped, r.tryon});
        }
        save_png(pl_grid, tryon_grid(rows));
      }
    }
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.code() << ": " << e.what() << '\n';
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << '\n';
  }
  return 1;
}

}  // namespace fsvt
