// cbctus: phantom, calibrate, sweep-fuse, plan, reposition-eval.
// Exit codes: 0 success, 1 configuration or input error, 2 numerical error.

#include "commands.hpp"
#include "config.hpp"

#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <optional>
#include <string>

namespace {

using namespace cbctus;
using namespace cbctus::cli;

struct Overrides {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  // calibrate
  std::optional<int> poses;
  std::optional<double> sigma_rot;
  std::optional<double> sigma_trans;
  std::optional<int> trials;
  std::optional<std::string> pairing;
  // sweep-fuse / plan
  std::optional<double> inject;
  std::optional<std::string> registration;
  bool no_volume = false;
  bool no_vessels = false;
  // reposition-eval
  std::optional<int> positions;
};

void check(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError(field, what);
}

void apply(const Overrides& o, RunConfig& c) {
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.output_dir = *o.out;
  if (o.poses) {
    check(*o.poses >= 2, "--poses", "must be >= 2");
    c.calibration.poses = *o.poses;
  }
  if (o.sigma_rot) {
    check(*o.sigma_rot >= 0.0, "--sigma-rot", "must be >= 0");
    c.calibration.sigma_rot_deg = *o.sigma_rot;
  }
  if (o.sigma_trans) {
    check(*o.sigma_trans >= 0.0, "--sigma-trans", "must be >= 0");
    c.calibration.sigma_trans_mm = *o.sigma_trans;
  }
  if (o.trials) {
    check(*o.trials >= 0, "--trials", "must be >= 0");
    c.calibration.monte_carlo_trials = *o.trials;
  }
  if (o.pairing) c.calibration.pairing = *o.pairing;
  if (o.inject) {
    check(*o.inject >= 0.0, "--inject", "must be >= 0");
    c.fusion.inject_offset_mm = *o.inject;
  }
  if (o.registration) c.fusion.registration = *o.registration;
  if (o.no_volume) c.fusion.write_volume = false;
  if (o.no_vessels) c.scene.tubes.clear();
  if (o.positions) {
    check(*o.positions >= 1, "--positions", "must be >= 1");
    c.reposition.positions = *o.positions;
  }
}

using Command = std::function<Report(const RunConfig&, const fs::path&)>;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CBCT/ultrasound fusion and needle planning on a synthetic phantom"};
  app.require_subcommand(1);
  Overrides o;
  app.add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "base seed of every random draw");
  app.add_option("--out", o.out, "output directory");

  auto* phantom = app.add_subcommand("phantom", "voxelize the phantom and write volume + scene files");
  auto* calibrate = app.add_subcommand("calibrate", "simulate and solve the robot/camera hand-eye calibration");
  calibrate->add_option("--poses", o.poses, "recorded robot poses");
  calibrate->add_option("--sigma-rot", o.sigma_rot, "camera rotation noise (deg)");
  calibrate->add_option("--sigma-trans", o.sigma_trans, "camera translation noise (mm)");
  calibrate->add_option("--trials", o.trials, "Monte-Carlo trials, 0 disables the table");
  calibrate->add_option("--pairing", o.pairing, "consecutive or all_pairs")
      ->check(CLI::IsMember({"consecutive", "all_pairs"}));
  auto* sweep = app.add_subcommand("sweep-fuse", "fan sweep, segmentation, fusion and mapping error");
  auto* plan = app.add_subcommand("plan", "needle trajectory, probe pose and safety report");
  for (auto* sub : {sweep, plan}) {
    sub->add_option("--inject", o.inject, "translation error injected into the US-to-CBCT registration (mm)");
    sub->add_option("--registration", o.registration, "exact or hand_eye")->check(CLI::IsMember({"exact", "hand_eye"}));
    sub->add_flag("--no-vessels", o.no_vessels, "remove every tube from the phantom");
  }
  sweep->add_flag("--no-volume", o.no_volume, "skip writing the fused volume");
  auto* repo = app.add_subcommand("reposition-eval", "registration update after CBCT device motion");
  repo->add_option("--positions", o.positions, "device positions");
  for (auto* sub : {phantom, calibrate, sweep, plan, repo}) {
    sub->add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "base seed of every random draw");
    sub->add_option("--out", o.out, "output directory");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  const std::vector<std::pair<CLI::App*, Command>> commands{
      {phantom, cmd_phantom}, {calibrate, cmd_calibrate}, {sweep, cmd_sweep_fuse}, {plan, cmd_plan}, {repo, cmd_reposition_eval}};

  try {
    RunConfig cfg = load_config(o.config);
    apply(o, cfg);
    cfg.scene.validate();
    for (const auto& [sub, run] : commands) {
      if (!sub->parsed()) continue;
      const fs::path dir = fs::path(cfg.output_dir) / sub->get_name();
      const Report r = run(cfg, dir);
      write_report(dir, r);
      for (const auto& line : r.lines) std::cout << line << '\n';
      std::cout << "wrote " << (dir / "report.json").string() << '\n';
    }
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: cli::io: " << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: cli::run: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
