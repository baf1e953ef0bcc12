#include "ssrtb/bidder.hpp"

#include <algorithm>
#include <cmath>

#include "ssrtb/errors.hpp"

namespace ssrtb {

double ActionGrid::multiplier(int k) {
    if (k < 0 || k >= kActionCount)
        throw ContractError("ActionGrid: action index out of range");
    return std::pow(10.0, 2.0 * k / 99.0 - 1.0);
}

double ActionGrid::alpha(int k) const { return alpha_ref * multiplier(k); }

LinearBidPolicy::LinearBidPolicy(double alpha) : alpha_(alpha) {
    if (alpha < 0.0) throw ContractError("LinearBidPolicy: alpha must be >= 0");
}

void LinearBidPolicy::set_alpha(double alpha) {
    if (alpha < 0.0) throw ContractError("LinearBidPolicy: alpha must be >= 0");
    alpha_ = alpha;
}

double LinearBidPolicy::bid(const AuctionRequest&, const Participant& self) {
    if (self.pcvr < 0.0 || self.pcvr > 1.0)
        throw ContractError("LinearBidPolicy: pcvr out of [0,1]");
    return alpha_ * self.pcvr;
}

KbPolicy::KbPolicy(std::map<std::string, double> presets) : presets_(std::move(presets)) {
    for (const auto& [kw, price] : presets_)
        if (price < 0.0) throw ContractError("KbPolicy: negative preset for " + kw);
}

double KbPolicy::preset(const std::string& keyword) const {
    auto it = presets_.find(keyword);
    if (it == presets_.end())
        throw ContractError("KbPolicy: no preset for keyword " + keyword);
    return it->second;
}

double KbPolicy::bid(const AuctionRequest& request, const Participant&) {
    return preset(request.keyword);
}

HourlyAlphaPolicy::HourlyAlphaPolicy(const QNetwork* net, ActionGrid grid,
                                     FeatureNorms norms)
    : net_(net), grid_(grid), norms_(std::move(norms)) {
    if (!net_) throw ContractError("HourlyAlphaPolicy: null network");
}

void HourlyAlphaPolicy::begin_episode(double) { linear_.set_alpha(0.0); }

void HourlyAlphaPolicy::on_hour(int hour, double budget_left, const HourAggregate& prev) {
    MdpState s = build_state(budget_left, hour + 1, prev, linear_.alpha(), norms_);
    std::vector<double> q = net_->q_values(s);
    int best = 0;
    for (int a = 1; a < kActionCount; ++a)
        if (q[a] > q[best]) best = a;
    linear_.set_alpha(grid_.alpha(best));
}

double HourlyAlphaPolicy::bid(const AuctionRequest& request, const Participant& self) {
    return linear_.bid(request, self);
}

MdpState build_amdp_state(double budget_left, long auction_index, long expected_total,
                          const AuctionRequest& request, const Participant& self,
                          const AmdpBlockStats& prev_block, double prev_multiplier,
                          const FeatureNorms& norms) {
    norms.validate();
    auto clip10 = [](double v) { return std::clamp(v, 0.0, 10.0); };
    MdpState s;
    s.budget_left = std::max(budget_left, 0.0);
    s.step = 1 + static_cast<int>(request.timestamp / 3600.0);
    s.g[0] = std::clamp(s.budget_left / norms.budget, 0.0, 1.0);
    s.g[1] = expected_total > 0
                 ? std::clamp(static_cast<double>(auction_index) / expected_total, 0.0, 2.0)
                 : 0.0;
    s.g[2] = request.timestamp / 86400.0;
    s.g[3] = self.pcvr;
    s.g[4] = clip10(self.bidscore / 2.0);
    s.g[5] = prev_block.clicks > 0
                 ? clip10(prev_block.cost / prev_block.clicks / norms.ppc)
                 : 0.0;
    s.g[6] = prev_block.clicks > 0
                 ? clip10(prev_block.pur_amt / prev_block.clicks / norms.pur_amt)
                 : 0.0;
    s.g[7] = prev_block.auctions > 0
                 ? static_cast<double>(prev_block.wins) / prev_block.auctions
                 : 0.0;
    s.g[8] = prev_block.auctions > 0
                 ? static_cast<double>(prev_block.clicks) / prev_block.auctions
                 : 0.0;
    s.g[9] = clip10(prev_block.cost / norms.cost);
    s.g[10] = clip10(prev_block.pur_amt / norms.pur_amt);
    s.g[11] = prev_block.auctions > 0 ? prev_block.pcvr_sum / prev_block.auctions : 0.0;
    s.g[12] = std::clamp(prev_multiplier / 10.0, 0.0, 1.0);
    // Fraction of the current hour already elapsed. Sub-hour position is
    // exactly what the hour-aggregated state cannot express, so this is the
    // auction-level formulation's window onto within-hour structure.
    s.g[13] = std::fmod(request.timestamp, 3600.0) / 3600.0;
    s.g[14] = 1.0;
    return s;
}

AmdpPolicy::AmdpPolicy(const QNetwork* net, double price_ref, FeatureNorms norms,
                       long expected_total, int block_size)
    : net_(net), price_grid_{price_ref}, norms_(std::move(norms)),
      expected_total_(expected_total), block_size_(block_size) {
    if (!net_) throw ContractError("AmdpPolicy: untrained model");
    if (price_ref <= 0.0) throw ContractError("AmdpPolicy: price_ref must be positive");
    if (block_size < 1) throw ContractError("AmdpPolicy: block_size must be >= 1");
}

void AmdpPolicy::begin_episode(double budget) {
    budget_left_ = budget;
    auction_index_ = 0;
    prev_block_ = {};
    current_block_ = {};
    prev_multiplier_ = 1.0;
}

double AmdpPolicy::bid(const AuctionRequest& request, const Participant& self) {
    MdpState s = build_amdp_state(budget_left_, auction_index_, expected_total_, request,
                                  self, prev_block_, prev_multiplier_, norms_);
    std::vector<double> q = net_->q_values(s);
    int best = 0;
    for (int a = 1; a < kActionCount; ++a)
        if (q[a] > q[best]) best = a;
    prev_multiplier_ = ActionGrid::multiplier(best);
    return price_grid_.alpha(best) * self.pcvr;
}

void AmdpPolicy::on_result(const AdImpression& imp, double budget_left) {
    budget_left_ = budget_left;
    ++auction_index_;
    ++current_block_.auctions;
    current_block_.pcvr_sum += imp.pcvr;
    if (imp.won) ++current_block_.wins;
    if (imp.clicked) {
        ++current_block_.clicks;
        current_block_.cost += imp.price_per_click;
    }
    current_block_.pur_amt += imp.purchase_amount;
    if (current_block_.auctions >= block_size_) {
        prev_block_ = current_block_;
        current_block_ = {};
    }
}

} // namespace ssrtb
