#pragma once

#include <map>
#include <string>

#include "ssrtb/auction.hpp"
#include "ssrtb/dqn.hpp"
#include "ssrtb/mdp.hpp"

namespace ssrtb {

// 100 multipliers, geometric from 0.1 to 10 around a reference scale.
struct ActionGrid {
    double alpha_ref = 1.0;

    double alpha(int k) const;       // alpha_ref * 10^(2k/99 - 1)
    double alpha_max() const { return alpha_ref * 10.0; }
    static double multiplier(int k); // 10^(2k/99 - 1)
};

// Policy interface as seen by the episode runner. on_hour is called before
// the first auction of every hour with the budget left and the previous
// hour's aggregate; bid is called once per auction the ad participates in;
// on_result reports the ad's view of the resolved auction.
class BidPolicy {
public:
    virtual ~BidPolicy() = default;
    virtual void begin_episode(double budget) { (void)budget; }
    virtual void on_hour(int hour, double budget_left, const HourAggregate& prev) {
        (void)hour; (void)budget_left; (void)prev;
    }
    virtual double bid(const AuctionRequest& request, const Participant& self) = 0;
    virtual void on_result(const AdImpression& imp, double budget_left) {
        (void)imp; (void)budget_left;
    }
};

// opt_bidprice = alpha * PCVR.
class LinearBidPolicy : public BidPolicy {
public:
    explicit LinearBidPolicy(double alpha = 0.0);

    double alpha() const { return alpha_; }
    void set_alpha(double alpha);

    double bid(const AuctionRequest& request, const Participant& self) override;

private:
    double alpha_;
};

// Fixed preset price per keyword; the fundamental baseline.
class KbPolicy : public BidPolicy {
public:
    explicit KbPolicy(std::map<std::string, double> presets);

    double bid(const AuctionRequest& request, const Participant& self) override;
    double preset(const std::string& keyword) const;

private:
    std::map<std::string, double> presets_;
};

// The control-by-model bidder: a trained Q-network picks alpha once per hour,
// bids are alpha * PCVR within the hour.
class HourlyAlphaPolicy : public BidPolicy {
public:
    HourlyAlphaPolicy(const QNetwork* net, ActionGrid grid, FeatureNorms norms);

    void begin_episode(double budget) override;
    void on_hour(int hour, double budget_left, const HourAggregate& prev) override;
    double bid(const AuctionRequest& request, const Participant& self) override;

    double current_alpha() const { return linear_.alpha(); }

private:
    const QNetwork* net_;
    ActionGrid grid_;
    FeatureNorms norms_;
    LinearBidPolicy linear_;
};

// Rolling statistics over the last decision block of the auction-level
// baseline.
struct AmdpBlockStats {
    long auctions = 0;
    long wins = 0;
    long clicks = 0;
    double cost = 0.0;
    double pur_amt = 0.0;
    double pcvr_sum = 0.0;
};

// Auction-level state for the AMDP baseline, padded to the shared network
// input width. Layout: budget fraction, auction index fraction, hour, the
// sampled auction's own pcvr and bidscore, competitor score summary, and the
// previous block's aggregates.
MdpState build_amdp_state(double budget_left, long auction_index, long expected_total,
                          const AuctionRequest& request, const Participant& self,
                          const AmdpBlockStats& prev_block, double prev_multiplier,
                          const FeatureNorms& norms);

// Auction-level baseline at evaluation time: for every auction the bid is
// pcvr * price_ref * multiplier[argmax Q], with the multiplier re-chosen per
// auction from the same 100-value grid (ties resolve to the lowest index).
class AmdpPolicy : public BidPolicy {
public:
    AmdpPolicy(const QNetwork* net, double price_ref, FeatureNorms norms,
               long expected_total, int block_size = 100);

    void begin_episode(double budget) override;
    double bid(const AuctionRequest& request, const Participant& self) override;
    void on_result(const AdImpression& imp, double budget_left) override;

private:
    const QNetwork* net_;
    ActionGrid price_grid_;
    FeatureNorms norms_;
    long expected_total_;
    int block_size_;
    double budget_left_ = 0.0;
    long auction_index_ = 0;
    AmdpBlockStats prev_block_, current_block_;
    double prev_multiplier_ = 1.0;
};

} // namespace ssrtb
