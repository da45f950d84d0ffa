#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "wcdiff/pipeline.hpp"

namespace {

wcdiff::RunConfig build_config(const std::string& config_path,
                               const std::vector<std::string>& overrides) {
  wcdiff::Config c;
  if (!config_path.empty()) c.load_file(config_path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw wcdiff::UsageError("--set expects section.key=value, got '" + kv + "'");
    }
    c.set_override(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return wcdiff::RunConfig::from_config(c);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wavelet-conditioned diffusion denoising for volumetric images"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "flat key = value config file with [sections]");
  app.add_option("--set", overrides, "override one config entry as section.key=value");

  auto* gen = app.add_subcommand("phantom-gen", "generate a synthetic phantom dataset");
  gen->fallthrough();
  std::string gen_out;
  gen->add_option("--out", gen_out, "output dataset directory")->required();

  auto* tb = app.add_subcommand("train-backbone", "train the conditional diffusion backbone");
  tb->fallthrough();
  std::string tb_data, tb_out;
  tb->add_option("--data", tb_data, "dataset directory")->required();
  tb->add_option("--out", tb_out, "output checkpoint path")->required();

  auto* tc = app.add_subcommand("train-control",
                                "train a control branch against a frozen backbone");
  tc->fallthrough();
  std::string tc_backbone, tc_data, tc_out;
  tc->add_option("--backbone", tc_backbone, "backbone checkpoint path")->required();
  tc->add_option("--data", tc_data, "dataset directory")->required();
  tc->add_option("--out", tc_out, "output checkpoint path")->required();

  auto* dn = app.add_subcommand("denoise", "denoise one low-dose volume");
  dn->fallthrough();
  std::string dn_backbone, dn_branch, dn_input, dn_output;
  dn->add_option("--backbone", dn_backbone, "backbone checkpoint path")->required();
  dn->add_option("--branch", dn_branch, "control branch checkpoint (omit for backbone only)");
  dn->add_option("--input", dn_input, "input volume (.vxv)")->required();
  dn->add_option("--output", dn_output, "output volume (.vxv)")->required();

  auto* ev = app.add_subcommand("eval", "score predictions against the clean test volumes");
  ev->fallthrough();
  std::string ev_data, ev_pred_dir, ev_label = "pred", ev_cmp, ev_out;
  double ev_pred_dose = 0.0;
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--pred-dir", ev_pred_dir, "directory holding <case>.vxv predictions");
  ev->add_option("--pred-dose", ev_pred_dose,
                 "score the dataset's own low-dose volumes at this dose instead");
  ev->add_option("--label", ev_label, "report label");
  ev->add_option("--comparator", ev_cmp, "baseline report JSON for paired significance tests");
  ev->add_option("--out", ev_out, "output report JSON path")->required();

  auto* ab = app.add_subcommand("ablate", "train and score every subband selector variant");
  ab->fallthrough();
  std::string ab_data, ab_out;
  ab->add_option("--data", ab_data, "dataset directory")->required();
  ab->add_option("--out", ab_out, "output directory for checkpoints and reports")->required();

  auto* dw = app.add_subcommand("dwt", "write the eight wavelet subbands of a volume");
  dw->fallthrough();
  std::string dw_input, dw_stem;
  dw->add_option("--input", dw_input, "input volume (.vxv)")->required();
  dw->add_option("--out-stem", dw_stem, "output stem; files become <stem>.<band>.vxv")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const wcdiff::RunConfig cfg = build_config(config_path, overrides);
    if (gen->parsed()) {
      wcdiff::cmd_phantom_gen(cfg, gen_out);
    } else if (tb->parsed()) {
      wcdiff::cmd_train_backbone(cfg, tb_data, tb_out);
    } else if (tc->parsed()) {
      wcdiff::cmd_train_control(cfg, tc_backbone, tc_data, tc_out);
    } else if (dn->parsed()) {
      wcdiff::cmd_denoise(cfg, dn_backbone, dn_branch, dn_input, dn_output);
    } else if (ev->parsed()) {
      if (ev_pred_dir.empty() == (ev_pred_dose == 0.0)) {
        throw wcdiff::UsageError("eval requires exactly one of --pred-dir or --pred-dose");
      }
      wcdiff::cmd_eval(cfg, ev_data, ev_pred_dir, ev_pred_dose, ev_label, ev_cmp, ev_out);
    } else if (ab->parsed()) {
      wcdiff::cmd_ablate(cfg, ab_data, ab_out);
    } else if (dw->parsed()) {
      wcdiff::cmd_dwt(dw_input, dw_stem);
    }
    return 0;
  } catch (const wcdiff::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return wcdiff::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
