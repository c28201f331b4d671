#include <iostream>

#include "CLI11.hpp"

#include "strokegan/commands.hpp"
#include "strokegan/errors.hpp"

using namespace strokegan;

int main(int argc, char** argv) {
    CLI::App app{"Unpaired two-font glyph translation with a one-bit stroke encoding"};
    app.require_subcommand(1);

    CommandOptions options;
    std::uint64_t seed_value = 0;

    auto add_common = [&](CLI::App* cmd, bool with_data) {
        cmd->add_option("--config", options.config_path, "Config file (key = value lines)");
        cmd->add_option("--seed", seed_value, "Override the config seed")
            ->each([&](const std::string&) { options.seed = seed_value; });
        cmd->add_option("--out", options.out_dir, "Output directory");
        if (with_data) cmd->add_option("--data", options.data_dir, "Corpus directory");
    };

    CLI::App* synth = app.add_subcommand("synth", "Render a two-font synthetic corpus to disk");
    add_common(synth, false);
    synth->add_flag("--force", options.force, "Overwrite an existing non-empty output directory");

    CLI::App* train = app.add_subcommand("train", "Train on a corpus and log per-epoch metrics");
    add_common(train, true);
    train->add_option("--resume", options.resume_path, "Continue from a checkpoint");
    std::string ablation;
    train->add_option("--ablation", ablation, "Ablation preset; 'cyclegan' sets lambda_st = 0")
        ->check(CLI::IsMember({"cyclegan"}));

    CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the corpus test split");
    add_common(eval, true);
    eval->add_option("--ckpt", options.checkpoint_path, "Checkpoint to evaluate")->required();

    CLI::App* experiment = app.add_subcommand(
        "experiment", "Train the full method and its lambda_st=0 ablation over several seeds");
    add_common(experiment, true);

    CLI::App* gradcheck =
        app.add_subcommand("gradcheck", "Finite-difference checks for every differentiable op");
    (void)gradcheck;

    CLI11_PARSE(app, argc, argv);
    options.ablation_cyclegan = (ablation == "cyclegan");

    try {
        if (synth->parsed()) {
            cmd_synth(options, std::cout);
        } else if (train->parsed()) {
            cmd_train(options, std::cout);
        } else if (eval->parsed()) {
            cmd_eval(options, std::cout);
        } else if (experiment->parsed()) {
            cmd_experiment(options, std::cout);
        } else if (gradcheck->parsed()) {
            if (!cmd_gradcheck(std::cout)) return 2;
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
