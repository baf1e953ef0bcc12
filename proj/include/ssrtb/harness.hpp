#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ssrtb/dqn.hpp"
#include "ssrtb/mdp.hpp"
#include "ssrtb/multiagent.hpp"
#include "ssrtb/simulator.hpp"

namespace ssrtb {

struct AdConfig {
    Ad ad; // keyword_tuples carry the KB presets
    AdMarketModel market;
    bool alpha_ref_given = false; // otherwise calibrated against KB cost
};

// Settings for the cross-day consistency run. The band check needs hourly
// counts large enough that sampling noise sits inside it, so this run uses
// its own traffic scale and a high-response probe market.
struct ConsistencyConfig {
    int pairs = 20;
    double auctions_per_day = 140000.0;
    double probe_alpha = 4.0;
    double probe_beta_a = 8.0;
    double probe_beta_b = 8.0;
    double probe_ctr_base = 0.55;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    double auctions_per_day = 1000.0;
    DayProfile profile;
    std::vector<AdConfig> ads;
    TrainerConfig trainer;
    double lambda = 0.5;
    int test_days = 3;
    int calibration_days = 5;
    int alpha_calibration_days = 3;
    int amdp_block_size = 100;
    double amdp_price_ref = 0.0; // 0 = the ad's calibrated alpha_ref
    // Per-hour discount for the auction-level baseline; 0 = use the trainer's
    // gamma. The two formulations bootstrap over very different step counts
    // (24 hours vs hundreds of blocks), so their discounts ablate separately.
    double amdp_gamma = 0.0;
    double equal_cost_tolerance = 0.05;
    ConsistencyConfig consistency;

    void validate() const;
};

ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& json_text);

// Per-ad derived state: calibrated alpha_ref, feature normalizers and the
// KB cost scale, all from seeded calibration days.
struct AdDerived {
    Ad ad;
    AdMarketModel market;
    std::map<std::string, double> presets;
    double alpha_ref = 1.0;
    double kb_mean_cost = 0.0; // mean KB daily cost over calibration days
    FeatureNorms norms;        // norms.budget left at kb_mean_cost
};

struct EvalRow {
    std::string ad_id;
    std::string algo;
    std::string split; // "train" or "test"
    double cost = 0.0;
    double pur_amt = 0.0;
    double pur_amt_per_cost = 0.0;
    double cvr = 0.0;
    double roi = 0.0; // coincides with pur_amt_per_cost in this simulator
    double ppc = 0.0;
    double cost_ratio_vs_kb = 0.0;
    double improvement_vs_kb = 0.0; // (x - x_kb) / x_kb on pur_amt_per_cost
    bool cost_ok = true;            // within the equal-cost tolerance
    bool zero_clicks = false;
};

struct CompareReport {
    std::vector<EvalRow> rows; // per ad and per "avg" pseudo-ad
    bool all_cost_ok = true;
};

struct ConvergenceSummary {
    double loss_first_decile = 0.0;
    double loss_final_decile = 0.0;
    double pur_first_decile = 0.0;
    double pur_final_decile = 0.0;
    bool loss_improved = false;
    bool pur_improved = false;
};

// Writes <prefix>_loss.csv (batches,loss), <prefix>_pur.csv (batches,pur_amt)
// and <prefix>_summary.csv with the first/final decile means.
ConvergenceSummary emit_convergence(const TrainLog& log, const std::string& dir,
                                    const std::string& prefix);

struct ConsistencySummary {
    int pairs = 0;
    long cells = 0;
    long excluded = 0;
    double pass_fraction = 0.0; // eta_hat < 0.03 among counted cells
    double max_eta = 0.0;
    double eta_bound_at_003 = 0.0;
    bool chain_ok = false; // every passing cell's implied ratio < 0.01
};

// Experiment orchestration behind the commands. Derived per-ad state is
// computed lazily and cached; every output is a pure function of
// (config, seed).
class Lab {
public:
    explicit Lab(ExperimentConfig cfg);

    const ExperimentConfig& config() const { return cfg_; }

    const AuctionLog& train_day() const;
    AuctionLog test_day(int index) const;
    const AdDerived& derived(const std::string& ad_id) const;

    // KB cost of the ad on this day; the equal-cost budget c.
    double kb_cost_on(const AuctionLog& log, const AdDerived& ad,
                      std::uint64_t stream_tag) const;

    void simulate(const std::string& out_dir) const;
    // algo: "rmdp", "amdp" or "m-rmdp". Writes checkpoints, meta JSON and
    // convergence CSVs; returns one summary per trained network.
    std::vector<ConvergenceSummary> train(const std::string& algo,
                                          const std::string& out_dir) const;
    CompareReport eval_checkpoint(const std::string& checkpoint_path,
                                  const std::string& out_dir) const;
    CompareReport compare(const std::string& out_dir) const;
    ConsistencySummary consistency(const std::string& out_dir) const;

    // Exposed for tests and the acceptance suite.
    TrainResult train_rmdp_ad(const AdDerived& ad, double budget_c) const;
    TrainResult train_amdp_ad(const AdDerived& ad, double budget_c) const;
    MassiveResult train_market(double lambda) const;
    double amdp_price_ref(const AdDerived& ad) const;
    EvalRow eval_policy_on_day(const std::string& algo, const std::string& split,
                               const AdDerived& ad, BidPolicy& policy,
                               const AuctionLog& log, std::uint64_t stream_tag) const;
    std::vector<EvalRow> market_eval_rows(const std::string& algo,
                                          const std::string& split,
                                          const std::vector<QNetwork>* nets,
                                          const AuctionLog& log,
                                          std::uint64_t stream_tag) const;

private:
    ExperimentConfig cfg_;
    mutable std::optional<AuctionLog> train_day_;
    mutable std::map<std::string, AdDerived> derived_;

    std::vector<Ad> all_ads() const;
    std::map<std::string, AdMarketModel> all_models() const;
    void derive_all() const;
};

void write_compare_csv(const CompareReport& report, const std::string& path);
void write_eval_csv(const std::vector<EvalRow>& rows, const std::string& path);
void write_train_log_csv(const TrainLog& log, const std::string& path);
void write_global_log_csv(const std::vector<GlobalLogRow>& rows, const std::string& path);

} // namespace ssrtb
