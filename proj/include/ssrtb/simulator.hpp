#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "ssrtb/auction.hpp"
#include "ssrtb/bidder.hpp"
#include "ssrtb/dqn.hpp"
#include "ssrtb/mdp.hpp"

namespace ssrtb {

// Log-normal parameters for one pool competitor archetype.
struct CompetitorSpec {
    double bidscore_mu = 0.0;
    double bidscore_sigma = 0.25;
    double bid_mu = 0.0; // log of the typical bid
    double bid_sigma = 0.3;
};

// Per-ad generation parameters for the synthetic market.
struct AdMarketModel {
    double pcvr_beta_a = 2.0;
    double pcvr_beta_b = 30.0;
    double ctr_base = 0.15;
    // Basket value paid by a purchase (see Participant::basket_value); the
    // day profile's sub-hour value pattern multiplies it.
    double purchase_amount_mean = 30.0;
    double bidscore_mu = 0.0;
    double bidscore_sigma = 0.25;
};

constexpr std::array<double, kEpisodeSteps> uniform_hours(double v) {
    std::array<double, kEpisodeSteps> a{};
    for (auto& x : a) x = v;
    return a;
}

struct DayProfile {
    std::array<double, kEpisodeSteps> hourly_intensity{};      // expected auctions/hour
    std::array<double, kEpisodeSteps> hourly_cvr_multiplier{}; // > 0
    // Deterministic hourly scale on competitor bids (> 0): competition can be
    // expensive in some hours and cheap in others, independent of value.
    std::array<double, kEpisodeSteps> hourly_competition = uniform_hours(1.0);
    std::vector<CompetitorSpec> competitor_pool;
    int competitors_per_auction = 5;
    int slot_count = 3;
    double reserve = 0.1;
    double position_bias = 0.5;
    double cvr_noise = 0.1; // half-width of the uniform noise on true_cvr
    // Sigma of a per-day, per-hour log-normal shift applied to competitor
    // bids; nonzero values make competition patterns day-specific.
    double competition_day_jitter = 0.0;
    // Day-specific sub-hour value pattern: each hour is split into
    // value_bins_per_hour bins and every (ad, bin) gets a log-normal
    // multiplier on its basket-value mean, renormalized to mean 1 within the
    // hour. Hourly value totals are therefore day-invariant (an hour-level
    // view sees identical days), but which minutes of the hour carry the
    // value is redrawn per day. Zero sigma disables the pattern.
    int value_bins_per_hour = 4;
    double value_day_sigma = 0.0;
    // When set, one sub-hour pattern is drawn per (ad, day) and repeated in
    // every hour ("late in the hour is hot today"), instead of independent
    // per-hour draws. The hour-level invariance is unchanged; the repeated
    // form just makes the pattern a function of hour phase alone.
    bool value_pattern_repeats = false;
    // Day-specific sub-hour competition pattern on the same bin grid: one
    // market-wide log-normal multiplier per bin on competitor bids,
    // renormalized to mean 1 within each hour (the hour-level view of
    // competition stays day-invariant; which minutes are cheap is redrawn
    // per day). Zero disables it.
    double competition_day_sigma = 0.0;

    void validate() const; // checks the overnight-valley shape and positivity
    static DayProfile default_profile(double auctions_per_day = 1000.0);
};

struct AuctionLog {
    std::string day_id;
    std::vector<AuctionRequest> auctions; // sorted by timestamp
};

AuctionLog generate_day(std::uint64_t seed, const DayProfile& profile,
                        const std::vector<Ad>& ads,
                        const std::map<std::string, AdMarketModel>& models);

void write_auction_log_jsonl(const AuctionLog& log, std::ostream& os);
void write_auction_log_jsonl(const AuctionLog& log, const std::string& path);
AuctionLog read_auction_log_jsonl(std::istream& is, const std::string& day_id = "");
AuctionLog read_auction_log_jsonl(const std::string& path);

struct EpisodeResult {
    std::array<HourAggregate, kEpisodeSteps> steps{};
    HourAggregate totals;
    double initial_budget = 0.0;
    double final_budget_left = 0.0;
};

struct AgentRun {
    std::string ad_id;
    BidPolicy* policy = nullptr;
    double budget = 0.0;
};

// Runs one day for any number of policy-driven agents sharing the market.
// Auctions resolve in timestamp order; once an agent's budget is exhausted it
// bids 0 for the rest of the day. Aggregates are grouped into 24 hourly steps.
std::vector<EpisodeResult> run_market_episode(const AuctionLog& log,
                                              std::vector<AgentRun> agents, Rng& rng,
                                              const DayProfile& profile);

EpisodeResult run_episode(const AuctionLog& log, const std::string& ad_id,
                          BidPolicy& policy, double budget, Rng& rng,
                          const DayProfile& profile);

// Hour-stepped training environment: the action picks alpha from the grid,
// the hour's auctions run with bid = alpha * pcvr, the reward is the hour's
// PUR_AMT. With strict_budget off (training), bidding continues through the
// hour even past exhaustion and a negative closing budget is reported as a
// violation.
class BidEnv : public Env {
public:
    BidEnv(const AuctionLog* log, std::string ad_id, double budget, ActionGrid grid,
           const DayProfile* profile, FeatureNorms norms, std::uint64_t response_seed,
           bool strict_budget = false);

    MdpState reset() override;
    StepResult step(int action) override;

    double budget_left() const { return budget_left_; }

private:
    const AuctionLog* log_;
    std::string ad_id_;
    double budget_;
    ActionGrid grid_;
    const DayProfile* profile_;
    FeatureNorms norms_;
    std::uint64_t response_seed_;
    bool strict_budget_;

    std::array<std::vector<const AuctionRequest*>, kEpisodeSteps> by_hour_;
    Rng rng_{0};
    double budget_left_ = 0.0;
    int step_ = 0; // 0 = needs reset; otherwise next step to execute, 1..24
    bool terminated_ = true;
    double current_alpha_ = 0.0;
};

// Auction-level training environment for the AMDP baseline: one step picks
// an alpha from the grid around price_ref and bids alpha * pcvr on the next
// `block_size` participated auctions; the reward is the block's PUR_AMT, and
// states are auction-level.
class AmdpEnv : public Env {
public:
    AmdpEnv(const AuctionLog* log, std::string ad_id, double budget, double price_ref,
            const DayProfile* profile, FeatureNorms norms, std::uint64_t response_seed,
            int block_size = 100, bool strict_budget = false);

    MdpState reset() override;
    StepResult step(int action) override;

    long participated_total() const { return static_cast<long>(mine_.size()); }

private:
    const AuctionLog* log_;
    std::string ad_id_;
    double budget_;
    ActionGrid price_grid_;
    const DayProfile* profile_;
    FeatureNorms norms_;
    std::uint64_t response_seed_;
    int block_size_;
    bool strict_budget_;

    std::vector<const AuctionRequest*> mine_; // auctions the ad participates in
    Rng rng_{0};
    double budget_left_ = 0.0;
    std::size_t pos_ = 0;
    bool terminated_ = true;
    AmdpBlockStats prev_block_;
    double prev_multiplier_ = 1.0;

    MdpState state_at(std::size_t pos) const;
};

} // namespace ssrtb
