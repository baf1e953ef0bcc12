#pragma once

#include <map>
#include <string>
#include <vector>

#include "ssrtb/rng.hpp"

namespace ssrtb {

// Advertiser-side preset: one keyword the ad bids on.
struct KeywordTuple {
    std::string belong_ad;
    std::string keyword;
    double bidprice = 0.0; // preset keyword-level price, >= 0
};

struct Ad {
    std::string id;
    std::vector<KeywordTuple> keyword_tuples;
    double daily_budget = 0.0; // > 0
    double alpha_ref = 1.0;    // reference scale for the action grid, > 0
};

// One ad's entry in a single auction. preset_bid >= 0 marks a bid fixed in
// the log (pool competitors); policy-driven ads carry preset_bid = -1.
struct Participant {
    std::string ad_id;
    double bidscore = 1.0; // > 0
    double pcvr = 0.0;     // predicted conversion rate, [0,1]
    double true_ctr = 0.0;
    double true_cvr = 0.0;
    // Amount a purchase in this auction pays out. Fixed when the day is
    // generated (the ad's mean amount times the day's sub-hour value
    // multiplier), so it is a frozen property of the logged impression:
    // replayed responses on the same day always pay it, a freshly generated
    // day redraws the pattern.
    double basket_value = 1.0;
    double preset_bid = -1.0;
};

// One impression event.
struct AuctionRequest {
    double timestamp = 0.0; // seconds within the day, [0, 86400)
    std::string keyword;
    std::vector<Participant> participants; // at most one entry per ad
    int slot_count = 1;

    const Participant* find(const std::string& ad_id) const;
};

struct RankedEntry {
    std::string ad_id;
    double score = 0.0; // bidscore * bid
};

struct SlotRecord {
    std::string ad_id;
    int rank = 0; // 1-based
    double price_per_click = 0.0;
    bool clicked = false;
    bool purchased = false;
    double purchase_amount = 0.0;
};

struct AuctionOutcome {
    std::vector<SlotRecord> slots;
    std::vector<std::string> losers;
};

// Position-bias curve: 1 / (1 + bias * (rank - 1)).
double position_factor(int rank, double bias = 0.5);

// Score ranking: score = bidscore * bid, descending, zero bids excluded,
// ties broken by lexicographically smaller ad id, truncated to slot_count.
// Participants missing from `bids` fall back to their preset_bid (or 0).
// An ad id in `bids` that is not a participant is a contract violation.
std::vector<RankedEntry> rank_ads(const AuctionRequest& request,
                                  const std::map<std::string, double>& bids);

// Generalized second price on score: slot i pays score_{i+1} / bidscore_i,
// the last slot pays reserve / bidscore. Prices are clipped to
// [reserve / bidscore, own bid].
std::map<std::string, double> price_slots(const std::vector<RankedEntry>& ranked,
                                          const std::map<std::string, double>& bidscores,
                                          double reserve);

// Samples clicks and purchases for the won slots.
// clicked ~ Bernoulli(true_ctr * position_factor(rank)); purchased ~
// Bernoulli(true_cvr) given a click; a purchase pays the participant's
// basket_value. Deterministic for a given rng state.
AuctionOutcome simulate_response(const AuctionRequest& request,
                                 const std::vector<RankedEntry>& ranked,
                                 const std::map<std::string, double>& prices,
                                 Rng& rng, double position_bias = 0.5);

} // namespace ssrtb
