#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "ssrtb.h"

namespace {

int fail(const char* what, ssrtb_status status) {
    std::fprintf(stderr, "%s failed (status %d): %s\n", what, static_cast<int>(status),
                 ssrtb_last_error());
    return 1;
}

struct LabHandle {
    ssrtb_lab* lab = nullptr;
    ~LabHandle() { ssrtb_lab_destroy(lab); }
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Synthetic sponsored-search bidding lab"};
    app.require_subcommand(1);

    std::string config_path, out_dir, algo, checkpoint;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "experiment config JSON")
            ->required()
            ->check(CLI::ExistingFile);
        cmd->add_option("--out", out_dir, "output directory")->required();
    };

    CLI::App* simulate = app.add_subcommand("simulate", "write seeded auction days");
    add_common(simulate);

    CLI::App* train =
        app.add_subcommand("train", "train bidders and write checkpoints");
    add_common(train);
    train->add_option("--algo", algo, "rmdp, amdp or m-rmdp")
        ->required()
        ->check(CLI::IsMember({"rmdp", "amdp", "m-rmdp"}));

    CLI::App* eval = app.add_subcommand(
        "eval", "evaluate a checkpoint on the test days at equal cost");
    add_common(eval);
    eval->add_option("--checkpoint", checkpoint, "checkpoint file")
        ->required()
        ->check(CLI::ExistingFile);

    CLI::App* compare =
        app.add_subcommand("compare", "train every algorithm and compare to presets");
    add_common(compare);

    CLI::App* consistency =
        app.add_subcommand("consistency", "cross-day hourly consistency probe");
    add_common(consistency);

    CLI11_PARSE(app, argc, argv);

    LabHandle h;
    if (ssrtb_status s = ssrtb_lab_create(config_path.c_str(), &h.lab))
        return fail("load config", s);

    if (simulate->parsed()) {
        if (ssrtb_status s = ssrtb_simulate(h.lab, out_dir.c_str()))
            return fail("simulate", s);
        std::printf("simulate: wrote auction days to %s\n", out_dir.c_str());
        return 0;
    }

    if (train->parsed()) {
        int converged = 0;
        if (ssrtb_status s =
                ssrtb_train(h.lab, algo.c_str(), out_dir.c_str(), &converged))
            return fail("train", s);
        std::printf("train %s: checkpoints in %s, converged=%s\n", algo.c_str(),
                    out_dir.c_str(), converged ? "yes" : "no");
        return converged ? 0 : 2;
    }

    if (eval->parsed()) {
        int cost_ok = 0;
        if (ssrtb_status s =
                ssrtb_eval(h.lab, checkpoint.c_str(), out_dir.c_str(), &cost_ok))
            return fail("eval", s);
        std::printf("eval: results in %s/eval.csv, equal_cost=%s\n", out_dir.c_str(),
                    cost_ok ? "ok" : "violated");
        return cost_ok ? 0 : 2;
    }

    if (compare->parsed()) {
        int cost_ok = 0;
        if (ssrtb_status s = ssrtb_compare(h.lab, out_dir.c_str(), &cost_ok))
            return fail("compare", s);
        std::printf("compare: results in %s/comparison.csv, equal_cost=%s\n",
                    out_dir.c_str(), cost_ok ? "ok" : "violated");
        return cost_ok ? 0 : 2;
    }

    int chain_ok = 0;
    double pass_fraction = 0.0, max_eta = 0.0;
    if (ssrtb_status s = ssrtb_consistency(h.lab, out_dir.c_str(), &pass_fraction,
                                           &max_eta, &chain_ok))
        return fail("consistency", s);
    bool ok = pass_fraction >= 0.9 && chain_ok;
    std::printf("consistency: pass_fraction=%.4f max_eta=%.4f chain=%s -> %s\n",
                pass_fraction, max_eta, chain_ok ? "ok" : "broken",
                ok ? "pass" : "fail");
    return ok ? 0 : 2;
}
