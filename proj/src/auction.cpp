#include "ssrtb/auction.hpp"

#include <algorithm>
#include <cmath>

#include "ssrtb/errors.hpp"

namespace ssrtb {

const Participant* AuctionRequest::find(const std::string& ad_id) const {
    for (const auto& p : participants)
        if (p.ad_id == ad_id) return &p;
    return nullptr;
}

double position_factor(int rank, double bias) {
    if (rank < 1) throw ContractError("position_factor: rank must be >= 1");
    return 1.0 / (1.0 + bias * (rank - 1));
}

std::vector<RankedEntry> rank_ads(const AuctionRequest& request,
                                  const std::map<std::string, double>& bids) {
    for (const auto& [ad_id, bid] : bids) {
        if (bid < 0.0) throw ContractError("rank_ads: negative bid for ad " + ad_id);
        if (!request.find(ad_id))
            throw ContractError("rank_ads: unknown ad id in bids: " + ad_id);
    }
    std::vector<RankedEntry> ranked;
    for (const auto& p : request.participants) {
        if (p.bidscore <= 0.0)
            throw ContractError("rank_ads: non-positive bidscore for ad " + p.ad_id);
        auto it = bids.find(p.ad_id);
        double bid = it != bids.end() ? it->second
                                      : (p.preset_bid >= 0.0 ? p.preset_bid : 0.0);
        if (bid <= 0.0) continue;
        ranked.push_back({p.ad_id, p.bidscore * bid});
    }
    std::sort(ranked.begin(), ranked.end(), [](const RankedEntry& a, const RankedEntry& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.ad_id < b.ad_id;
    });
    if (static_cast<int>(ranked.size()) > request.slot_count)
        ranked.resize(request.slot_count);
    return ranked;
}

std::map<std::string, double> price_slots(const std::vector<RankedEntry>& ranked,
                                          const std::map<std::string, double>& bidscores,
                                          double reserve) {
    if (ranked.empty()) throw ContractError("price_slots: empty ranking");
    std::map<std::string, double> prices;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        auto it = bidscores.find(ranked[i].ad_id);
        if (it == bidscores.end())
            throw ContractError("price_slots: missing bidscore for ad " + ranked[i].ad_id);
        double bidscore = it->second;
        double own_bid = ranked[i].score / bidscore;
        double floor = reserve / bidscore;
        double price = (i + 1 < ranked.size()) ? ranked[i + 1].score / bidscore : floor;
        price = std::clamp(price, floor, own_bid);
        prices[ranked[i].ad_id] = price;
    }
    return prices;
}

AuctionOutcome simulate_response(const AuctionRequest& request,
                                 const std::vector<RankedEntry>& ranked,
                                 const std::map<std::string, double>& prices,
                                 Rng& rng, double position_bias) {
    AuctionOutcome out;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        const Participant* p = request.find(ranked[i].ad_id);
        if (!p) throw ContractError("simulate_response: ranked ad not in request");
        SlotRecord slot;
        slot.ad_id = ranked[i].ad_id;
        slot.rank = static_cast<int>(i) + 1;
        slot.price_per_click = prices.at(slot.ad_id);
        slot.clicked = rng.bernoulli(p->true_ctr * position_factor(slot.rank, position_bias));
        if (slot.clicked && rng.bernoulli(p->true_cvr)) {
            slot.purchased = true;
            slot.purchase_amount = p->basket_value;
        }
        out.slots.push_back(slot);
    }
    for (const auto& p : request.participants) {
        bool won = std::any_of(ranked.begin(), ranked.end(),
                               [&](const RankedEntry& r) { return r.ad_id == p.ad_id; });
        if (!won) out.losers.push_back(p.ad_id);
    }
    return out;
}

} // namespace ssrtb
