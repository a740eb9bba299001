#include <string>

#include <CLI11.hpp>

#include "endico/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"endico: distributed OPF for radial feeders with convergence certificates"};
  app.require_subcommand(1);

  endico::RunConfig run_cfg;
  std::string objective = "loss";
  std::string variant = "plain";

  auto add_run_flags = [&](CLI::App* cmd) {
    cmd->add_option("--feeder", run_cfg.feeder_path, "feeder document")->required();
    cmd->add_option("--objective", objective, "loss | dv")
        ->check(CLI::IsMember({"loss", "dv"}));
    cmd->add_option("--variant", variant, "plain | delta")
        ->check(CLI::IsMember({"plain", "delta"}));
    cmd->add_option("--delta0", run_cfg.delta0, "initial convergence parameter (> 1)");
    cmd->add_option("--tol", run_cfg.tol, "boundary residual tolerance");
    cmd->add_option("--max-rounds", run_cfg.max_rounds, "round cap");
    cmd->add_option("--seed", run_cfg.seed, "seed echoed into artifacts");
    cmd->add_option("--out", run_cfg.output_dir, "output directory");
  };

  CLI::App* run = app.add_subcommand("run", "execute a distributed run");
  add_run_flags(run);
  run->add_flag("--certify", run_cfg.record_certificates,
                "record per-round certificates");

  CLI::App* compare = app.add_subcommand("compare", "distributed vs central");
  add_run_flags(compare);

  std::string trace_path, feeder_path, cert_out = "out";
  CLI::App* certify = app.add_subcommand("certify", "evaluate certificates on a trace");
  certify->add_option("--trace", trace_path, "trace.csv from run")->required();
  certify->add_option("--feeder", feeder_path, "feeder document")->required();
  certify->add_option("--out", cert_out, "output directory");

  endico::GenerateConfig gen_cfg;
  CLI::App* generate = app.add_subcommand("generate", "write a synthetic feeder");
  generate->add_option("--kind", gen_cfg.kind, "line | tree | randomized-tree")
      ->check(CLI::IsMember({"line", "tree", "randomized-tree"}));
  generate->add_option("--n", gen_cfg.n, "bus count (line / randomized-tree)");
  generate->add_option("--branching", gen_cfg.branching, "children per node (tree)");
  generate->add_option("--depth", gen_cfg.depth, "levels (tree)");
  generate->add_option("--r", gen_cfg.params.r, "line resistance, pu");
  generate->add_option("--x", gen_cfg.params.x, "line reactance, pu");
  generate->add_option("--p-load", gen_cfg.params.p_load, "per-bus active load, pu");
  generate->add_option("--q-load", gen_cfg.params.q_load, "per-bus reactive load, pu");
  generate->add_option("--der-density", gen_cfg.params.der_density,
                       "fraction of buses with a DER");
  generate->add_option("--s-rating", gen_cfg.params.s_rating, "DER rating, pu");
  generate->add_option("--p-out", gen_cfg.params.p_out, "DER active output, pu");
  generate->add_option("--i-rated", gen_cfg.params.i_rated, "thermal limit, pu");
  generate->add_option("--v-ref", gen_cfg.params.v_ref,
                       "deviation-objective reference voltage, pu");
  generate->add_flag("--randomize", gen_cfg.params.randomized,
                     "jitter per-bus quantities");
  generate->add_option("--seed", gen_cfg.params.seed, "generator seed");
  generate->add_option("--out", gen_cfg.out_path, "output feeder path")->required();

  CLI11_PARSE(app, argc, argv);

  run_cfg.objective = objective == "dv" ? endico::ObjectiveKind::voltage_deviation
                                        : endico::ObjectiveKind::loss;
  run_cfg.variant =
      variant == "delta" ? endico::Variant::delta : endico::Variant::plain;

  if (run->parsed()) return endico::cmd_run(run_cfg);
  if (compare->parsed()) return endico::cmd_compare(run_cfg);
  if (certify->parsed())
    return endico::cmd_certify(trace_path, feeder_path, cert_out);
  if (generate->parsed()) return endico::cmd_generate(gen_cfg);
  return endico::kExitInputError;
}
