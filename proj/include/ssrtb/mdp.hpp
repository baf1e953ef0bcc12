#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace ssrtb {

inline constexpr int kFeatureDim = 15; // network input width
inline constexpr int kEpisodeSteps = 24;

// The agent-side view of one auction it participated in.
struct AdImpression {
    double pcvr = 0.0;
    bool won = false;
    int rank = 0; // 1-based when won, 0 otherwise
    double price_per_click = 0.0;
    bool clicked = false;
    bool purchased = false;
    double purchase_amount = 0.0;
};

// Hour-aggregated statistics for one ad. Ratios follow the zero-division
// convention: 0 whenever the denominator is 0.
struct HourAggregate {
    long impressions = 0; // auctions entered
    long wins = 0;        // slots won
    long clicks = 0;
    long purchases = 0;
    double cost = 0.0;
    double pur_amt = 0.0;
    double ctr = 0.0;      // clicks / impressions
    double cvr = 0.0;      // purchases / clicks
    double ppc = 0.0;      // cost / clicks
    double avg_pcvr = 0.0; // mean pcvr over entered auctions
    double avg_rank = 0.0; // mean rank over wins, 0 if no wins
    double win_rate = 0.0; // wins / impressions
};

struct MdpState {
    double budget_left = 0.0; // b >= 0
    int step = 1;             // t in 1..m
    std::array<double, kFeatureDim> g{};
    bool terminal = false;
};

// Per-feature positive normalizers, from a calibration run.
struct FeatureNorms {
    double impressions = 1.0;
    double wins = 1.0;
    double clicks = 1.0;
    double purchases = 1.0;
    double cost = 1.0;
    double pur_amt = 1.0;
    double ppc = 1.0;
    double budget = 1.0;    // c, the episode budget
    double alpha_max = 1.0; // top of the action grid
    int slot_count = 1;

    void validate() const; // throws ConfigError on any non-positive entry
};

struct SimilarityReport {
    double ratio = 0.0;
    bool substitutable = false; // ratio < 0.01
};

HourAggregate aggregate_hour(const std::vector<AdImpression>& impressions);

// g = [b/c, t/24, impressions*, wins*, clicks*, purchases*, cost*, pur_amt*,
//      ctr, cvr, ppc*, avg_pcvr, avg_rank/slot_count, win_rate, alpha/alpha_max]
// where starred entries are divided by their normalizer and clipped to [0,10].
MdpState build_state(double budget_left, int step, const HourAggregate& agg,
                     double prev_alpha, const FeatureNorms& norms);

double step_reward(const HourAggregate& agg);

// ratio = ||x - y||^2 / min(||x||^2, ||y||^2); substitutable iff ratio < 0.01.
SimilarityReport similarity(std::span<const double> x, std::span<const double> y);

// (2*eta / (1 - eta))^2, the pairwise substitution-ratio bound implied by a
// relative deviation band of width eta.
double eta_bound(double eta);

inline constexpr int kConsistencyFeatures = 12;
extern const std::array<const char*, kConsistencyFeatures> kConsistencyFeatureNames;

struct ConsistencyCell {
    int feature = 0;
    int step = 0;
    double eta_hat = 0.0;
    bool pass = false;
    bool excluded = false; // zero cross-day mean
};

struct ConsistencyReport {
    std::vector<ConsistencyCell> cells;
    double max_eta = 0.0;      // over non-excluded cells
    double pass_fraction = 0.0; // eta_hat < 0.03 among non-excluded cells
    double implied_ratio = 0.0; // eta_bound(max_eta)
    bool observation_holds = false; // max_eta < 0.03
    bool assumption_holds = false;  // implied_ratio < 0.01
};

// Compares hour aggregates of two days generated under the same action
// sequence. Per cell, eta_hat is the max relative deviation from the
// cross-day mean of that feature/step.
ConsistencyReport consistency_check(std::span<const HourAggregate> day_a,
                                    std::span<const HourAggregate> day_b);

void write_consistency_csv(const ConsistencyReport& report, std::ostream& os);

} // namespace ssrtb
