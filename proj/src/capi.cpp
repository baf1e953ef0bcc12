#include "ssrtb.h"

#include <exception>
#include <string>

#include "ssrtb/errors.hpp"
#include "ssrtb/harness.hpp"

struct ssrtb_lab {
    ssrtb::Lab lab;
};

namespace {

thread_local std::string g_last_error;

template <typename F>
ssrtb_status guarded(F&& f) {
    try {
        f();
        return SSRTB_OK;
    } catch (const ssrtb::ConfigError& e) {
        g_last_error = e.what();
        return SSRTB_ERR_CONFIG;
    } catch (const ssrtb::ContractError& e) {
        g_last_error = e.what();
        return SSRTB_ERR_CONTRACT;
    } catch (const ssrtb::CheckpointCorruptError& e) {
        g_last_error = e.what();
        return SSRTB_ERR_CHECKPOINT;
    } catch (const ssrtb::CheckpointVersionError& e) {
        g_last_error = e.what();
        return SSRTB_ERR_CHECKPOINT;
    } catch (const ssrtb::IoError& e) {
        g_last_error = e.what();
        return SSRTB_ERR_IO;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return SSRTB_ERR_INTERNAL;
    }
}

ssrtb_status require(bool ok, const char* message) {
    if (ok) return SSRTB_OK;
    g_last_error = message;
    return SSRTB_ERR_INVALID_ARG;
}

} // namespace

extern "C" {

const char* ssrtb_version(void) { return "1.0.0"; }

const char* ssrtb_last_error(void) { return g_last_error.c_str(); }

ssrtb_status ssrtb_lab_create(const char* config_path, ssrtb_lab** out) {
    if (auto s = require(config_path && out, "ssrtb_lab_create: NULL argument"))
        return s;
    *out = nullptr;
    return guarded([&] {
        *out = new ssrtb_lab{ssrtb::Lab(ssrtb::load_config(config_path))};
    });
}

ssrtb_status ssrtb_lab_create_from_json(const char* json_text, ssrtb_lab** out) {
    if (auto s = require(json_text && out,
                         "ssrtb_lab_create_from_json: NULL argument"))
        return s;
    *out = nullptr;
    return guarded([&] {
        *out = new ssrtb_lab{ssrtb::Lab(ssrtb::parse_config(json_text))};
    });
}

void ssrtb_lab_destroy(ssrtb_lab* lab) { delete lab; }

ssrtb_status ssrtb_simulate(ssrtb_lab* lab, const char* out_dir) {
    if (auto s = require(lab && out_dir, "ssrtb_simulate: NULL argument")) return s;
    return guarded([&] { lab->lab.simulate(out_dir); });
}

ssrtb_status ssrtb_train(ssrtb_lab* lab, const char* algo, const char* out_dir,
                         int* converged) {
    if (auto s = require(lab && algo && out_dir, "ssrtb_train: NULL argument"))
        return s;
    return guarded([&] {
        auto summaries = lab->lab.train(algo, out_dir);
        if (converged) {
            bool ok = !summaries.empty();
            for (const auto& s : summaries) ok = ok && s.loss_improved && s.pur_improved;
            *converged = ok ? 1 : 0;
        }
    });
}

ssrtb_status ssrtb_eval(ssrtb_lab* lab, const char* checkpoint_path,
                        const char* out_dir, int* cost_ok) {
    if (auto s = require(lab && checkpoint_path && out_dir,
                         "ssrtb_eval: NULL argument"))
        return s;
    return guarded([&] {
        auto report = lab->lab.eval_checkpoint(checkpoint_path, out_dir);
        if (cost_ok) *cost_ok = report.all_cost_ok ? 1 : 0;
    });
}

ssrtb_status ssrtb_compare(ssrtb_lab* lab, const char* out_dir, int* cost_ok) {
    if (auto s = require(lab && out_dir, "ssrtb_compare: NULL argument")) return s;
    return guarded([&] {
        auto report = lab->lab.compare(out_dir);
        if (cost_ok) *cost_ok = report.all_cost_ok ? 1 : 0;
    });
}

ssrtb_status ssrtb_consistency(ssrtb_lab* lab, const char* out_dir,
                               double* pass_fraction, double* max_eta,
                               int* chain_ok) {
    if (auto s = require(lab && out_dir, "ssrtb_consistency: NULL argument")) return s;
    return guarded([&] {
        auto summary = lab->lab.consistency(out_dir);
        if (pass_fraction) *pass_fraction = summary.pass_fraction;
        if (max_eta) *max_eta = summary.max_eta;
        if (chain_ok) *chain_ok = summary.chain_ok ? 1 : 0;
    });
}

} // extern "C"
