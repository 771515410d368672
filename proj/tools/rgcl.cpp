#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rgcl/harness.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "flat JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "overrides the config seed");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--set", f.overrides, "key=value config override (repeatable)")->take_all();
}

rgcl::ExperimentConfig resolve(const CommonFlags& f) {
  rgcl::ExperimentConfig cfg = f.config_path.empty() ? rgcl::ExperimentConfig{} : rgcl::ExperimentConfig::load(f.config_path);
  for (const std::string& o : f.overrides) cfg.apply_override(o);
  if (f.seed) cfg.seed = *f.seed;
  if (!f.out.empty()) cfg.out_dir = f.out;
  cfg.validate();
  return cfg;
}

void print_train_summary(const rgcl::Report& r) {
  std::printf("steps %zu  knn %.4f  spearman(size, tau) %.4f  head3 %.4f  tail3 %.4f  %.1fs\n", r.steps,
              r.knn_accuracy, r.tau_summary.spearman_size_tau, r.tau_summary.head3_mean, r.tau_summary.tail3_mean,
              r.wall_clock_seconds);
  if (r.tau_text_summary)
    std::printf("text side: spearman %.4f  mean tau %.6f (image %.6f)\n", r.tau_text_summary->spearman_size_tau,
                r.tau_text_summary->mean, r.tau_summary.mean);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Per-anchor temperature contrastive learning on synthetic data"};
  app.require_subcommand(1);

  CommonFlags uni, bi, gen, dump, ver;
  auto* train_uni = app.add_subcommand("train-unimodal", "train one encoder on augmented views");
  add_common(train_uni, uni);
  auto* train_bi = app.add_subcommand("train-bimodal", "train image and text towers on paired views");
  add_common(train_bi, bi);
  auto* gen_data = app.add_subcommand("gen-data", "write the configured synthetic dataset as CSV");
  add_common(gen_data, gen);
  auto* dump_tau = app.add_subcommand("dump-tau", "print tau.csv from an optimizer checkpoint in --out");
  add_common(dump_tau, dump);
  std::string dump_file;
  dump_tau->add_option("--file", dump_file, "write to this path instead of stdout");
  auto* verify = app.add_subcommand("verify", "run the numerical self-checks");
  add_common(verify, ver);
  std::string fault;
  verify->add_option("--inject-fault", fault)->group("");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_uni) {
      rgcl::ExperimentConfig cfg = resolve(uni);
      if (cfg.mode == rgcl::TrainMode::bimodal) throw std::invalid_argument("train-unimodal: config mode is bimodal");
      print_train_summary(rgcl::run_train_unimodal(cfg));
      return 0;
    }
    if (*train_bi) {
      rgcl::ExperimentConfig cfg = resolve(bi);
      cfg.mode = rgcl::TrainMode::bimodal;
      print_train_summary(rgcl::run_train_bimodal(cfg));
      return 0;
    }
    if (*gen_data) {
      const rgcl::ExperimentConfig cfg = resolve(gen);
      const auto j = rgcl::run_gen_data(cfg);
      std::printf("wrote %zu rows to %s\n", j["dataset"]["rows"].get<std::size_t>(), cfg.out_dir.c_str());
      return 0;
    }
    if (*dump_tau) {
      const rgcl::ExperimentConfig cfg = resolve(dump);
      const std::filesystem::path ckpt = std::filesystem::path(cfg.out_dir) / "optimizer.bin";
      const std::filesystem::path target = dump_file.empty() ? std::filesystem::path(cfg.out_dir) / ".tau_dump.csv"
                                                             : std::filesystem::path(dump_file);
      if (cfg.mode == rgcl::TrainMode::bimodal) {
        const auto ds = rgcl::make_bimodal_dataset(cfg);
        const auto opt = rgcl::load_bimodal_optimizer(ckpt);
        std::vector<rgcl::AnchorState> image(opt.anchors.size());
        for (std::size_t i = 0; i < image.size(); ++i) image[i] = opt.anchors[i].image;
        rgcl::export_tau_csv(image, ds.labels, target);
      } else {
        const auto ds = rgcl::make_unimodal_dataset(cfg);
        rgcl::export_tau_csv(rgcl::load_optimizer(ckpt).anchors, ds.labels, target);
      }
      if (dump_file.empty()) {
        std::ifstream is(target);
        std::cout << is.rdbuf();
        std::filesystem::remove(target);
      }
      return 0;
    }
    if (*verify) {
      const rgcl::ExperimentConfig cfg = resolve(ver);
      rgcl::VerifyOptions opts;
      opts.seed = cfg.seed;
      if (!fault.empty()) {
        if (fault != "disable-tau-projection") throw std::invalid_argument("unknown fault '" + fault + "'");
        opts.disable_tau_projection = true;
      }
      const rgcl::VerifyReport rep = rgcl::run_verify(opts);
      for (const auto& c : rep.checks)
        std::printf("%-4s %-32s residual %.3e (tol %.1e) %s\n", c.passed ? "ok" : "FAIL", c.name.c_str(), c.residual,
                    c.tolerance, c.detail.c_str());
      std::filesystem::create_directories(cfg.out_dir);
      rgcl::write_json(rep.to_json(), std::filesystem::path(cfg.out_dir) / "report.json");
      return rep.all_passed() ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "rgcl: %s\n", e.what());
    return 2;
  }
  return 0;
}
