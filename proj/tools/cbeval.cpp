#include "cbeval/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>

namespace {

struct StageArgs {
    std::string config_file;
    bool dry_run = false;
    int parallelism = 0;
};

void add_stage_flags(CLI::App* cmd, StageArgs& args) {
    cmd->add_option("-c,--config", args.config_file, "experiment config (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_flag("--dry-run", args.dry_run, "list planned work without executing");
    cmd->add_option("--parallelism", args.parallelism,
                    "worker threads (overrides the config)");
}

using StageFn = void (*)(const cbeval::ExperimentConfig&, const cbeval::StageOptions&);

int run_stages(const StageArgs& args, const std::vector<StageFn>& stages) {
    const cbeval::ExperimentConfig config = cbeval::load_config(args.config_file);
    const cbeval::StageOptions opt{args.dry_run, args.parallelism};
    for (StageFn stage : stages) stage(config, opt);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"concept-explanation simulatability evaluation pipeline"};
    app.require_subcommand(1);

    StageArgs stage_args;
    std::vector<StageFn> stages;

    auto add_stage = [&](const std::string& name, const std::string& desc, StageFn fn) {
        CLI::App* cmd = app.add_subcommand(name, desc);
        add_stage_flags(cmd, stage_args);
        cmd->callback([&stages, fn] { stages.push_back(fn); });
    };

    add_stage("extract", "fit concept spaces for every (bundle, method, k)",
              cbeval::cmd_extract);
    add_stage("interpret", "compute word/label interpretations per concept space",
              cbeval::cmd_interpret);
    add_stage("prompt", "render simulatability prompts for every setting",
              cbeval::cmd_prompt);
    add_stage("simulate", "query the simulator and score its predictions",
              cbeval::cmd_simulate);
    add_stage("metrics", "compute complexity and faithfulness metrics",
              cbeval::cmd_metrics);
    add_stage("rank", "Copeland pairwise ranking over simulator accuracies",
              cbeval::cmd_rank);
    add_stage("report", "correlate metrics against the simulatability ranking",
              cbeval::cmd_report);

    {
        CLI::App* cmd = app.add_subcommand("run", "run every stage in order");
        add_stage_flags(cmd, stage_args);
        cmd->callback([&stages] {
            stages = {cbeval::cmd_extract, cbeval::cmd_interpret, cbeval::cmd_prompt,
                      cbeval::cmd_simulate, cbeval::cmd_metrics, cbeval::cmd_rank,
                      cbeval::cmd_report};
        });
    }

    cbeval::SyntheticOptions synth;
    std::string synth_out;
    {
        CLI::App* cmd = app.add_subcommand(
            "gen-bundle", "write a synthetic activation bundle for offline runs");
        cmd->add_option("-o,--out", synth_out, "output directory")->required();
        cmd->add_option("--samples", synth.n, "number of samples");
        cmd->add_option("--dims", synth.p, "activation dimensionality");
        cmd->add_option("--classes", synth.classes, "number of classes");
        cmd->add_option("--concepts", synth.k_true, "planted concept directions");
        cmd->add_option("--seed", synth.seed, "generator seed");
        cmd->add_option("--noise", synth.noise_level, "additive noise stddev");
        cmd->add_option("--mislabel", synth.mislabel_fraction,
                        "fraction of misclassified samples");
        cmd->add_option("--cross", synth.cross_activation,
                        "off-class concept co-activation strength");
        bool signed_acts = false;
        cmd->add_flag("--signed", signed_acts, "allow negative activations");
        cmd->callback([&, cmd] {
            synth.nonneg = !cmd->get_option("--signed")->as<bool>();
            const cbeval::SyntheticBundle out = cbeval::generate_synthetic_bundle(synth);
            cbeval::write_bundle(out.bundle, synth_out);
            std::cout << "wrote bundle to " << synth_out << " (" << out.bundle.n()
                      << " samples, " << out.bundle.p() << " dims)\n";
        });
    }

    try {
        app.parse(argc, argv);
        if (!stages.empty()) return run_stages(stage_args, stages);
        return 0;
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
