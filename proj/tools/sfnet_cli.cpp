// sfnet: command-line front end for data generation, training, evaluation,
// accounting, filter export, the mixing benchmark and gradient checks.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "sfnet/bench.hpp"
#include "sfnet/data.hpp"
#include "sfnet/fragments.hpp"
#include "sfnet/model/accounting.hpp"
#include "sfnet/model/checkpoint.hpp"
#include "sfnet/model/filters.hpp"
#include "sfnet/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using sfnet::model::SFNetConfig;

namespace {

struct RunConfig {
  SFNetConfig model = SFNetConfig::tiny();
  sfnet::train::TrainConfig train;
};

SFNetConfig preset(const std::string& name) {
  if (name == "tiny") return SFNetConfig::tiny();
  if (name == "frequency-only") return SFNetConfig::frequency_only();
  if (name == "full-scale") return SFNetConfig::full_scale();
  throw std::invalid_argument("unknown preset '" + name + "'");
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

// Accepts a flat model config or {"model": {...}, "train": {...}} as written
// by `train --dump-config`.
RunConfig load_run_config(const std::string& path, const std::string& preset_name) {
  RunConfig rc;
  rc.model = preset(preset_name);
  if (path.empty()) return rc;
  const json j = read_json(path);
  if (j.is_object() && j.contains("model")) {
    for (const auto& [key, value] : j.items())
      if (key != "model" && key != "train") throw std::invalid_argument("unknown top-level key '" + key + "'");
    rc.model = sfnet::model::config_from_json(j.at("model"));
    if (j.contains("train")) rc.train = sfnet::train::train_config_from_json(j.at("train"));
  } else {
    rc.model = sfnet::model::config_from_json(j);
  }
  return rc;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void check_extents(const std::vector<sfnet::data::VolumeRecord>& records, const SFNetConfig& cfg) {
  for (const auto& r : records) {
    if (r.shape != cfg.input_extent) {
      throw std::invalid_argument("volume " + r.subject_id + " has extent " + std::to_string(r.shape[0]) + "x" +
                                  std::to_string(r.shape[1]) + "x" + std::to_string(r.shape[2]) +
                                  " but the model expects " + std::to_string(cfg.input_extent[0]) + "x" +
                                  std::to_string(cfg.input_extent[1]) + "x" + std::to_string(cfg.input_extent[2]));
    }
  }
}

std::string fmt(const std::optional<double>& v) { return sfnet::train::optional_csv(v); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SFNet volumetric classification lab"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic two-class volume dataset");
  std::size_t gen_n = 100;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  std::size_t gen_extent = 32;
  double gen_noise = sfnet::data::SynthSpec{}.noise_sigma;
  gen->add_option("--n", gen_n, "Total number of volumes (even; half per class)")->capture_default_str();
  gen->add_option("--seed", gen_seed, "Generator seed")->capture_default_str();
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--extent", gen_extent, "Cubic volume side")->capture_default_str();
  gen->add_option("--noise", gen_noise, "Additive Gaussian noise sigma")->capture_default_str();

  // train
  auto* tr = app.add_subcommand("train", "Five-fold training run with a held-out test set");
  std::string tr_config, tr_preset = "tiny", tr_data, tr_out;
  std::optional<std::uint64_t> tr_seed;
  std::optional<std::size_t> tr_epochs, tr_batch;
  std::optional<double> tr_lr;
  std::size_t tr_parallel = 1;
  bool tr_dump = false;
  tr->add_option("--config", tr_config, "Model config JSON (flat, or {model, train})");
  tr->add_option("--preset", tr_preset, "Base config when --config is absent")
      ->check(CLI::IsMember({"tiny", "frequency-only", "full-scale"}))
      ->capture_default_str();
  tr->add_option("--data", tr_data, "Dataset directory holding manifest.csv");
  tr->add_option("--out", tr_out, "Run directory");
  tr->add_option("--seed", tr_seed, "Seed for the fold plan, initialization and shuffling");
  tr->add_option("--epochs", tr_epochs, "Epochs per fold");
  tr->add_option("--batch", tr_batch, "Mini-batch size");
  tr->add_option("--lr", tr_lr, "Peak learning rate");
  tr->add_option("--parallel-folds", tr_parallel, "Folds trained concurrently")->capture_default_str();
  tr->add_flag("--dump-config", tr_dump, "Print the effective configuration and exit");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint on a dataset");
  std::string ev_ckpt, ev_data, ev_out, ev_plan;
  std::size_t ev_batch = 8;
  ev->add_option("--ckpt", ev_ckpt, "Checkpoint directory")->required();
  ev->add_option("--data", ev_data, "Dataset directory holding manifest.csv")->required();
  ev->add_option("--plan", ev_plan, "Fold plan JSON (e.g. from report.json); restricts to its test set");
  ev->add_option("--batch", ev_batch, "Evaluation batch size")->capture_default_str();
  ev->add_option("--out", ev_out, "Write the result JSON here");

  // count-params / count-flops
  auto* cp = app.add_subcommand("count-params", "Per-module trainable parameter counts");
  auto* cf = app.add_subcommand("count-flops", "Per-module forward FLOP counts");
  std::string cnt_config, cnt_preset = "tiny";
  bool cnt_json = false;
  for (auto* sc : {cp, cf}) {
    sc->add_option("--config", cnt_config, "Model config JSON");
    sc->add_option("--preset", cnt_preset, "Base config when --config is absent")
        ->check(CLI::IsMember({"tiny", "frequency-only", "full-scale"}))
        ->capture_default_str();
    sc->add_flag("--json", cnt_json, "Emit JSON instead of a table");
  }

  // export-filters
  auto* ef = app.add_subcommand("export-filters", "Write filter magnitude spectra as PGM + CSV");
  std::string ef_ckpt, ef_plane = "xy", ef_out;
  std::vector<std::size_t> ef_channels, ef_layers;
  ef->add_option("--ckpt", ef_ckpt, "Checkpoint directory")->required();
  ef->add_option("--plane", ef_plane, "Slice plane")->check(CLI::IsMember({"xy", "yz", "xz"}))->capture_default_str();
  ef->add_option("--out", ef_out, "Output directory (default <ckpt>/filters)");
  ef->add_option("--channels", ef_channels, "Channel indices (default all)")->delimiter(',');
  ef->add_option("--layers", ef_layers, "Frequency block indices (default all)")->delimiter(',');

  // bench-mixing
  auto* bm = app.add_subcommand("bench-mixing", "Time attention vs FFT token mixing");
  sfnet::bench::BenchOptions bm_opt;
  std::string bm_out;
  bm->add_option("--tokens", bm_opt.tokens, "Token counts (cubes of powers of two)")->delimiter(',')->capture_default_str();
  bm->add_option("--dim", bm_opt.dim, "Embedding width")->capture_default_str();
  bm->add_option("--repeats", bm_opt.repeats, "Timed samples per point (>= 3)")->capture_default_str();
  bm->add_option("--seed", bm_opt.seed, "Input seed")->capture_default_str();
  bm->add_option("--out", bm_out, "Write CSV here (JSON with slopes alongside)");

  // grad-check
  auto* gc = app.add_subcommand("grad-check", "Finite-difference gradient check (64-bit)");
  std::vector<std::string> gc_fragments{"all"};
  std::uint64_t gc_seed = 0;
  sfnet::GradCheckOptions gc_opt;
  std::string gc_out;
  std::vector<std::string> gc_choices = sfnet::fragment_names();
  gc_choices.push_back("all");
  gc_choices.push_back("layers");
  gc->add_option("--fragment", gc_fragments, "Fragment names, 'layers' or 'all'")
      ->delimiter(',')
      ->check(CLI::IsMember(gc_choices))
      ->capture_default_str();
  gc->add_option("--seed", gc_seed, "Seed for inputs and coordinates")->capture_default_str();
  gc->add_option("--coords", gc_opt.coords_per_tensor, "Coordinates per tensor")->capture_default_str();
  gc->add_option("--step", gc_opt.step, "Central difference step")->capture_default_str();
  gc->add_option("--out", gc_out, "Write the JSON report here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      if (gen_n < 2 || gen_n % 2 != 0) throw std::invalid_argument("--n must be an even number >= 2");
      sfnet::data::SynthSpec spec;
      spec.seed = gen_seed;
      spec.extent = {gen_extent, gen_extent, gen_extent};
      spec.noise_sigma = gen_noise;
      const auto recs = sfnet::data::generate_dataset(spec, gen_n / 2, gen_out);
      std::cout << "wrote " << recs.size() << " volumes to " << gen_out << "\n";
      return 0;
    }

    if (tr->parsed()) {
      RunConfig rc = load_run_config(tr_config, tr_preset);
      if (tr_seed) rc.train.seed = *tr_seed;
      if (tr_epochs) rc.train.epochs = *tr_epochs;
      if (tr_batch) rc.train.batch = *tr_batch;
      if (tr_lr) rc.train.lr = *tr_lr;
      rc.train.validate();
      sfnet::model::token_geometry(rc.model);
      if (tr_dump) {
        std::cout << json{{"model", sfnet::model::to_json(rc.model)}, {"train", sfnet::train::to_json(rc.train)}}.dump(2)
                  << "\n";
        return 0;
      }
      if (tr_data.empty() || tr_out.empty()) throw std::invalid_argument("train needs --data and --out");
      if (tr_parallel == 0) throw std::invalid_argument("--parallel-folds must be >= 1");
      const auto records = sfnet::data::read_manifest(fs::path(tr_data) / "manifest.csv");
      check_extents(records, rc.model);
      const auto plan = sfnet::data::make_folds(records, rc.train.seed);
      const json report = sfnet::train::run_cross_validation(rc.model, records, plan, rc.train, tr_out, tr_parallel);
      const json& agg = report.at("aggregate");
      std::cout << "report: " << (fs::path(tr_out) / "report.json").string() << "\n";
      for (const char* which : {"best", "final"}) {
        std::cout << which << ":";
        for (const char* m : {"acc", "sen", "spe", "f1", "auc"}) {
          const json& s = agg.at(which).at(m);
          std::cout << " " << m << "=" << (s.at("mean").is_null() ? std::string("NA") : std::to_string(s.at("mean").get<double>()));
        }
        std::cout << "\n";
      }
      return 0;
    }

    if (ev->parsed()) {
      auto net = sfnet::model::load_checkpoint<float>(ev_ckpt);
      const auto records = sfnet::data::read_manifest(fs::path(ev_data) / "manifest.csv");
      check_extents(records, net->config());
      std::vector<std::size_t> idx;
      if (!ev_plan.empty()) {
        json pj = read_json(ev_plan);
        if (pj.contains("fold_plan")) pj = pj.at("fold_plan");
        idx = sfnet::data::fold_plan_from_json(pj).test;
      } else {
        for (std::size_t i = 0; i < records.size(); ++i) idx.push_back(i);
      }
      const auto ds = sfnet::train::load_dataset(records, idx);
      const auto r = sfnet::train::evaluate(*net, ds, ev_batch);
      const json j = sfnet::train::to_json(r);
      if (!ev_out.empty()) write_text(ev_out, j.dump(2) + "\n");
      std::cout << "n=" << ds.size() << " loss=" << r.loss << " acc=" << fmt(r.metrics.acc)
                << " sen=" << fmt(r.metrics.sen) << " spe=" << fmt(r.metrics.spe) << " f1=" << fmt(r.metrics.f1)
                << " auc=" << fmt(r.auc) << "\n";
      return 0;
    }

    if (cp->parsed() || cf->parsed()) {
      const RunConfig rc = load_run_config(cnt_config, cnt_preset);
      const auto report = cp->parsed() ? sfnet::model::count_params(rc.model) : sfnet::model::count_flops(rc.model);
      if (cnt_json)
        std::cout << report.to_json().dump(2) << "\n";
      else
        std::cout << report.table(cp->parsed() ? "params" : "FLOPs");
      return 0;
    }

    if (ef->parsed()) {
      auto net = sfnet::model::load_checkpoint<float>(ef_ckpt);
      const fs::path out = ef_out.empty() ? fs::path(ef_ckpt) / "filters" : fs::path(ef_out);
      const auto images = sfnet::model::export_filter_spectra(*net, sfnet::model::parse_plane(ef_plane), ef_channels,
                                                              ef_layers, out);
      std::cout << "wrote " << images.size() << " images and filter_spectra.csv to " << out.string() << "\n";
      return 0;
    }

    if (bm->parsed()) {
      const auto result = sfnet::bench::bench_mixing(bm_opt);
      std::ostringstream csv;
      result.write_csv(csv);
      std::cout << csv.str();
      std::cout << "attention_slope " << result.attention_slope << "\nfft_slope " << result.fft_slope << "\n";
      if (!bm_out.empty()) {
        write_text(bm_out, csv.str());
        write_text(fs::path(bm_out).replace_extension(".json"), result.to_json().dump(2) + "\n");
      }
      return 0;
    }

    if (gc->parsed()) {
      std::vector<std::string> names;
      for (const auto& f : gc_fragments) {
        if (f == "all") {
          names = sfnet::fragment_names();
          break;
        }
        if (f == "layers") {
          auto l = sfnet::layer_fragment_names();
          names.insert(names.end(), l.begin(), l.end());
        } else {
          names.push_back(f);
        }
      }
      json out = json::object();
      bool ok = true;
      for (const auto& name : names) {
        const auto report = sfnet::check_fragment(name, gc_seed, gc_opt);
        std::cout << "== " << name << (report.passed ? " PASS" : " FAIL") << " max_rel_error=" << report.max_rel_error
                  << " kink_skips=" << report.kink_skips << "\n"
                  << report.table();
        out[name] = report.to_json();
        ok = ok && report.passed;
      }
      if (!gc_out.empty()) write_text(gc_out, out.dump(2) + "\n");
      return ok ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
