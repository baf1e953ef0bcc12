#include "ssrtb/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ssrtb/errors.hpp"

namespace ssrtb {

void DayProfile::validate() const {
    double valley_max = 0.0;
    for (int h = 3; h <= 7; ++h) valley_max = std::max(valley_max, hourly_intensity[h]);
    if (!(valley_max < hourly_intensity[9]))
        throw ConfigError("DayProfile: overnight-valley intensity must stay below the "
                          "morning peak (hours 3-7 vs hour 9)");
    for (double v : hourly_intensity)
        if (v < 0.0) throw ConfigError("DayProfile: negative hourly intensity");
    for (double v : hourly_cvr_multiplier)
        if (!(v > 0.0)) throw ConfigError("DayProfile: cvr multiplier must be positive");
    for (double v : hourly_competition)
        if (!(v > 0.0))
            throw ConfigError("DayProfile: competition multiplier must be positive");
    if (competitors_per_auction > 0 && competitor_pool.empty())
        throw ConfigError("DayProfile: empty competitor pool");
    if (slot_count < 1) throw ConfigError("DayProfile: slot_count must be >= 1");
    if (value_bins_per_hour < 1)
        throw ConfigError("DayProfile: value_bins_per_hour must be >= 1");
    if (value_day_sigma < 0.0)
        throw ConfigError("DayProfile: value_day_sigma must be >= 0");
    if (competition_day_sigma < 0.0)
        throw ConfigError("DayProfile: competition_day_sigma must be >= 0");
}

DayProfile DayProfile::default_profile(double auctions_per_day) {
    // Hour weights follow the familiar diurnal shape: overnight valley,
    // morning peak around 9, evening activity and purchase peak around 20.
    static const std::array<double, 24> weights = {
        0.60, 0.50, 0.40, 0.25, 0.20, 0.20, 0.25, 0.35, 0.80, 1.00, 0.95, 0.90,
        0.85, 0.80, 0.80, 0.85, 0.90, 0.95, 1.00, 1.05, 1.10, 1.00, 0.90, 0.70};
    static const std::array<double, 24> cvr_mult = {
        0.80, 0.80, 0.80, 0.80, 0.80, 0.85, 0.90, 0.95, 1.00, 1.00, 1.00, 1.05,
        1.05, 1.00, 1.00, 1.00, 1.05, 1.10, 1.20, 1.30, 1.40, 1.30, 1.10, 0.90};
    // Competition is dearest in office hours and cheap overnight/evening, so
    // flat preset bidding overpays midday relative to the evening value peak.
    static const std::array<double, 24> competition = {
        0.70, 0.70, 0.70, 0.70, 0.70, 0.75, 0.80, 0.90, 1.10, 1.30, 1.35, 1.35,
        1.35, 1.35, 1.30, 1.30, 1.25, 1.10, 0.95, 0.90, 0.90, 0.85, 0.80, 0.75};
    double sum = 0.0;
    for (double w : weights) sum += w;
    DayProfile p;
    for (int h = 0; h < 24; ++h) {
        p.hourly_intensity[h] = auctions_per_day * weights[h] / sum;
        p.hourly_cvr_multiplier[h] = cvr_mult[h];
        p.hourly_competition[h] = competition[h];
    }
    p.competitor_pool = {{0.0, 0.25, std::log(0.6), 0.35},
                         {0.0, 0.25, std::log(0.9), 0.30},
                         {0.1, 0.20, std::log(1.2), 0.25}};
    return p;
}

AuctionLog generate_day(std::uint64_t seed, const DayProfile& profile,
                        const std::vector<Ad>& ads,
                        const std::map<std::string, AdMarketModel>& models) {
    profile.validate();
    for (const auto& ad : ads)
        if (!models.count(ad.id))
            throw ConfigError("generate_day: no market model for ad " + ad.id);

    Rng rng(substream_seed(seed, "day-gen"));

    std::array<double, 24> comp_jitter;
    for (int h = 0; h < 24; ++h)
        comp_jitter[h] = profile.competition_day_jitter > 0.0
                             ? std::exp(profile.competition_day_jitter * rng.normal(0.0, 1.0))
                             : 1.0;

    const int vb = profile.value_bins_per_hour;
    std::vector<double> comp_mult(static_cast<std::size_t>(24 * vb), 1.0);
    if (profile.competition_day_sigma > 0.0) {
        for (int h = 0; h < 24; ++h) {
            double sum = 0.0;
            for (int b = 0; b < vb; ++b) {
                double v = rng.lognormal(0.0, profile.competition_day_sigma);
                comp_mult[h * vb + b] = v;
                sum += v;
            }
            for (int b = 0; b < vb; ++b) comp_mult[h * vb + b] *= vb / sum;
        }
    }
    std::map<std::string, std::vector<double>> value_mult;
    for (const auto& ad : ads) {
        std::vector<double> mult(static_cast<std::size_t>(24 * vb), 1.0);
        if (profile.value_day_sigma > 0.0) {
            const int hours_drawn = profile.value_pattern_repeats ? 1 : 24;
            for (int h = 0; h < hours_drawn; ++h) {
                double sum = 0.0;
                for (int b = 0; b < vb; ++b) {
                    double v = rng.lognormal(0.0, profile.value_day_sigma);
                    mult[h * vb + b] = v;
                    sum += v;
                }
                // Renormalize so the hour's mean multiplier is exactly 1.
                for (int b = 0; b < vb; ++b) mult[h * vb + b] *= vb / sum;
            }
            if (profile.value_pattern_repeats)
                for (int h = 1; h < 24; ++h)
                    for (int b = 0; b < vb; ++b) mult[h * vb + b] = mult[b];
        }
        value_mult[ad.id] = std::move(mult);
    }

    std::set<std::string> keyword_set;
    for (const auto& ad : ads)
        for (const auto& kt : ad.keyword_tuples) keyword_set.insert(kt.keyword);
    std::vector<std::string> keywords(keyword_set.begin(), keyword_set.end());
    if (keywords.empty()) throw ConfigError("generate_day: no keywords across ads");

    AuctionLog log;
    log.day_id = "day-" + std::to_string(seed);
    for (int h = 0; h < 24; ++h) {
        long count = rng.poisson(profile.hourly_intensity[h]);
        for (long i = 0; i < count; ++i) {
            AuctionRequest req;
            req.timestamp = h * 3600.0 + rng.uniform(0.0, 3600.0);
            req.keyword = keywords[rng.uniform_int(0, static_cast<int>(keywords.size()) - 1)];
            req.slot_count = profile.slot_count;
            int bin = h * vb + std::min(vb - 1, static_cast<int>(
                                                    (req.timestamp - h * 3600.0) /
                                                    3600.0 * vb));
            for (const auto& ad : ads) {
                bool has = std::any_of(ad.keyword_tuples.begin(), ad.keyword_tuples.end(),
                                       [&](const KeywordTuple& kt) {
                                           return kt.keyword == req.keyword;
                                       });
                if (!has) continue;
                const AdMarketModel& m = models.at(ad.id);
                Participant p;
                p.ad_id = ad.id;
                p.bidscore = rng.lognormal(m.bidscore_mu, m.bidscore_sigma);
                double raw = rng.beta(m.pcvr_beta_a, m.pcvr_beta_b);
                p.pcvr = std::clamp(raw * profile.hourly_cvr_multiplier[h], 0.0, 1.0);
                p.true_cvr = std::clamp(
                    p.pcvr * (1.0 + rng.uniform(-profile.cvr_noise, profile.cvr_noise)),
                    0.0, 1.0);
                p.true_ctr = std::clamp(m.ctr_base * (1.0 + p.pcvr), 0.0, 1.0);
                p.basket_value = m.purchase_amount_mean * value_mult.at(ad.id)[bin];
                req.participants.push_back(std::move(p));
            }
            for (int c = 0; c < profile.competitors_per_auction; ++c) {
                const CompetitorSpec& spec =
                    profile.competitor_pool[rng.uniform_int(
                        0, static_cast<int>(profile.competitor_pool.size()) - 1)];
                Participant p;
                p.ad_id = "comp" + std::to_string(c);
                p.bidscore = rng.lognormal(spec.bidscore_mu, spec.bidscore_sigma);
                p.preset_bid = rng.lognormal(spec.bid_mu, spec.bid_sigma) *
                               profile.hourly_competition[h] * comp_jitter[h] *
                               comp_mult[bin];
                p.pcvr = 0.05;
                p.true_ctr = 0.1;
                p.true_cvr = 0.05;
                p.basket_value = 20.0;
                req.participants.push_back(std::move(p));
            }
            log.auctions.push_back(std::move(req));
        }
    }
    std::stable_sort(log.auctions.begin(), log.auctions.end(),
                     [](const AuctionRequest& a, const AuctionRequest& b) {
                         return a.timestamp < b.timestamp;
                     });
    return log;
}

void write_auction_log_jsonl(const AuctionLog& log, std::ostream& os) {
    for (const auto& req : log.auctions) {
        nlohmann::json parts = nlohmann::json::array();
        for (const auto& p : req.participants) {
            parts.push_back({{"ad", p.ad_id},
                             {"bs", p.bidscore},
                             {"pcvr", p.pcvr},
                             {"ctr", p.true_ctr},
                             {"cvr", p.true_cvr},
                             {"pam", p.basket_value},
                             {"bid", p.preset_bid}});
        }
        nlohmann::json line = {{"ts", req.timestamp},
                               {"kw", req.keyword},
                               {"slots", req.slot_count},
                               {"parts", parts}};
        os << line.dump() << '\n';
    }
}

void write_auction_log_jsonl(const AuctionLog& log, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open auction log for writing: " + path);
    write_auction_log_jsonl(log, os);
    if (!os) throw IoError("auction log write failed: " + path);
}

AuctionLog read_auction_log_jsonl(std::istream& is, const std::string& day_id) {
    AuctionLog log;
    log.day_id = day_id;
    std::string line;
    long lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw IoError("auction log line " + std::to_string(lineno) + ": " + e.what());
        }
        AuctionRequest req;
        req.timestamp = j.at("ts").get<double>();
        req.keyword = j.at("kw").get<std::string>();
        req.slot_count = j.at("slots").get<int>();
        for (const auto& pj : j.at("parts")) {
            Participant p;
            p.ad_id = pj.at("ad").get<std::string>();
            p.bidscore = pj.at("bs").get<double>();
            p.pcvr = pj.at("pcvr").get<double>();
            p.true_ctr = pj.at("ctr").get<double>();
            p.true_cvr = pj.at("cvr").get<double>();
            p.basket_value = pj.at("pam").get<double>();
            p.preset_bid = pj.at("bid").get<double>();
            req.participants.push_back(std::move(p));
        }
        log.auctions.push_back(std::move(req));
    }
    return log;
}

AuctionLog read_auction_log_jsonl(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open auction log: " + path);
    return read_auction_log_jsonl(is, path);
}

namespace {

int hour_of(const AuctionRequest& req) {
    int h = static_cast<int>(req.timestamp / 3600.0);
    return std::clamp(h, 0, kEpisodeSteps - 1);
}

struct Resolved {
    std::vector<RankedEntry> ranked;
    std::map<std::string, double> prices;
    AuctionOutcome outcome;
    bool resolved = false;
};

Resolved resolve_auction(const AuctionRequest& req,
                         const std::map<std::string, double>& agent_bids,
                         const DayProfile& profile, Rng& rng) {
    Resolved r;
    r.ranked = rank_ads(req, agent_bids);
    if (r.ranked.empty()) return r;
    std::map<std::string, double> bidscores;
    for (const auto& p : req.participants) bidscores[p.ad_id] = p.bidscore;
    r.prices = price_slots(r.ranked, bidscores, profile.reserve);
    r.outcome = simulate_response(req, r.ranked, r.prices, rng, profile.position_bias);
    r.resolved = true;
    return r;
}

AdImpression impression_for(const Resolved& r, const Participant& self) {
    AdImpression imp;
    imp.pcvr = self.pcvr;
    if (!r.resolved) return imp;
    for (const auto& slot : r.outcome.slots) {
        if (slot.ad_id != self.ad_id) continue;
        imp.won = true;
        imp.rank = slot.rank;
        imp.price_per_click = slot.price_per_click;
        imp.clicked = slot.clicked;
        imp.purchased = slot.purchased;
        imp.purchase_amount = slot.purchase_amount;
        break;
    }
    return imp;
}

void accumulate_totals(EpisodeResult& res) {
    for (const auto& s : res.steps) {
        res.totals.impressions += s.impressions;
        res.totals.wins += s.wins;
        res.totals.clicks += s.clicks;
        res.totals.purchases += s.purchases;
        res.totals.cost += s.cost;
        res.totals.pur_amt += s.pur_amt;
    }
    if (res.totals.impressions > 0) {
        res.totals.ctr = static_cast<double>(res.totals.clicks) / res.totals.impressions;
        res.totals.win_rate = static_cast<double>(res.totals.wins) / res.totals.impressions;
    }
    if (res.totals.clicks > 0) {
        res.totals.cvr = static_cast<double>(res.totals.purchases) / res.totals.clicks;
        res.totals.ppc = res.totals.cost / res.totals.clicks;
    }
    res.final_budget_left = res.initial_budget - res.totals.cost;
}

} // namespace

std::vector<EpisodeResult> run_market_episode(const AuctionLog& log,
                                              std::vector<AgentRun> agents, Rng& rng,
                                              const DayProfile& profile) {
    struct State {
        double budget_left;
        std::vector<AdImpression> hour_imps;
        EpisodeResult result;
        HourAggregate prev_agg;
    };
    std::vector<State> st(agents.size());
    for (std::size_t i = 0; i < agents.size(); ++i) {
        if (!agents[i].policy) throw ContractError("run_market_episode: null policy");
        if (!(agents[i].budget > 0.0))
            throw ContractError("run_market_episode: budget must be positive");
        st[i].budget_left = agents[i].budget;
        st[i].result.initial_budget = agents[i].budget;
        agents[i].policy->begin_episode(agents[i].budget);
    }

    int hour = -1;
    auto close_hour = [&]() {
        if (hour < 0) return;
        for (std::size_t i = 0; i < agents.size(); ++i) {
            st[i].prev_agg = aggregate_hour(st[i].hour_imps);
            st[i].result.steps[hour] = st[i].prev_agg;
            st[i].hour_imps.clear();
        }
    };
    auto open_hour = [&](int h) {
        for (std::size_t i = 0; i < agents.size(); ++i)
            agents[i].policy->on_hour(h, st[i].budget_left, st[i].prev_agg);
    };

    for (const auto& req : log.auctions) {
        int h = hour_of(req);
        while (hour < h) {
            close_hour();
            ++hour;
            open_hour(hour);
        }
        std::map<std::string, double> bids;
        std::vector<std::pair<std::size_t, const Participant*>> present;
        for (std::size_t i = 0; i < agents.size(); ++i) {
            const Participant* self = req.find(agents[i].ad_id);
            if (!self) continue;
            present.emplace_back(i, self);
            double bid = st[i].budget_left <= 0.0 ? 0.0
                                                  : agents[i].policy->bid(req, *self);
            bids[agents[i].ad_id] = bid;
        }
        if (present.empty()) continue;
        bool any_positive = std::any_of(bids.begin(), bids.end(),
                                        [](const auto& kv) { return kv.second > 0.0; });
        Resolved r;
        if (any_positive) r = resolve_auction(req, bids, profile, rng);
        for (auto& [i, self] : present) {
            AdImpression imp = impression_for(r, *self);
            if (imp.clicked) st[i].budget_left -= imp.price_per_click;
            agents[i].policy->on_result(imp, st[i].budget_left);
            st[i].hour_imps.push_back(imp);
        }
    }
    while (hour < kEpisodeSteps - 1) {
        close_hour();
        ++hour;
        open_hour(hour);
    }
    close_hour();

    std::vector<EpisodeResult> results;
    for (auto& s : st) {
        accumulate_totals(s.result);
        results.push_back(std::move(s.result));
    }
    return results;
}

EpisodeResult run_episode(const AuctionLog& log, const std::string& ad_id,
                          BidPolicy& policy, double budget, Rng& rng,
                          const DayProfile& profile) {
    auto results = run_market_episode(log, {{ad_id, &policy, budget}}, rng, profile);
    return results.front();
}

BidEnv::BidEnv(const AuctionLog* log, std::string ad_id, double budget, ActionGrid grid,
               const DayProfile* profile, FeatureNorms norms, std::uint64_t response_seed,
               bool strict_budget)
    : log_(log), ad_id_(std::move(ad_id)), budget_(budget), grid_(grid),
      profile_(profile), norms_(std::move(norms)), response_seed_(response_seed),
      strict_budget_(strict_budget) {
    if (!log_ || !profile_) throw ContractError("BidEnv: null log or profile");
    if (!(budget > 0.0)) throw ContractError("BidEnv: budget must be positive");
    norms_.validate();
    for (const auto& req : log_->auctions)
        if (req.find(ad_id_)) by_hour_[hour_of(req)].push_back(&req);
}

MdpState BidEnv::reset() {
    rng_ = Rng(substream_seed(response_seed_, "response"));
    budget_left_ = budget_;
    step_ = 1;
    terminated_ = false;
    current_alpha_ = 0.0;
    return build_state(budget_left_, 1, HourAggregate{}, 0.0, norms_);
}

Env::StepResult BidEnv::step(int action) {
    if (terminated_) throw ContractError("BidEnv: step on a terminated episode");
    current_alpha_ = grid_.alpha(action);
    std::vector<AdImpression> imps;
    for (const AuctionRequest* req : by_hour_[step_ - 1]) {
        const Participant* self = req->find(ad_id_);
        double bid = (strict_budget_ && budget_left_ <= 0.0)
                         ? 0.0
                         : current_alpha_ * self->pcvr;
        Resolved r;
        if (bid > 0.0)
            r = resolve_auction(*req, {{ad_id_, bid}}, *profile_, rng_);
        AdImpression imp = impression_for(r, *self);
        if (imp.clicked) budget_left_ -= imp.price_per_click;
        imps.push_back(imp);
    }
    HourAggregate agg = aggregate_hour(imps);
    StepResult out;
    out.reward = step_reward(agg);
    out.budget_violated = !strict_budget_ && budget_left_ < 0.0;
    out.done = step_ == kEpisodeSteps || out.budget_violated;
    out.next = build_state(budget_left_, std::min(step_ + 1, kEpisodeSteps), agg,
                           current_alpha_, norms_);
    out.next.terminal = out.done;
    ++step_;
    if (out.done) terminated_ = true;
    return out;
}

AmdpEnv::AmdpEnv(const AuctionLog* log, std::string ad_id, double budget, double price_ref,
                 const DayProfile* profile, FeatureNorms norms,
                 std::uint64_t response_seed, int block_size, bool strict_budget)
    : log_(log), ad_id_(std::move(ad_id)), budget_(budget), price_grid_{price_ref},
      profile_(profile), norms_(std::move(norms)), response_seed_(response_seed),
      block_size_(block_size), strict_budget_(strict_budget) {
    if (!log_ || !profile_) throw ContractError("AmdpEnv: null log or profile");
    if (!(budget > 0.0)) throw ContractError("AmdpEnv: budget must be positive");
    if (!(price_ref > 0.0)) throw ContractError("AmdpEnv: price_ref must be positive");
    if (block_size < 1) throw ContractError("AmdpEnv: block_size must be >= 1");
    norms_.validate();
    for (const auto& req : log_->auctions)
        if (req.find(ad_id_)) mine_.push_back(&req);
    if (mine_.empty())
        throw ContractError("AmdpEnv: ad " + ad_id_ + " participates in no auctions");
}

MdpState AmdpEnv::state_at(std::size_t pos) const {
    if (pos >= mine_.size()) {
        MdpState s;
        s.budget_left = std::max(budget_left_, 0.0);
        s.step = kEpisodeSteps;
        s.terminal = true;
        return s;
    }
    const AuctionRequest* req = mine_[pos];
    return build_amdp_state(budget_left_, static_cast<long>(pos),
                            static_cast<long>(mine_.size()), *req, *req->find(ad_id_),
                            prev_block_, prev_multiplier_, norms_);
}

MdpState AmdpEnv::reset() {
    rng_ = Rng(substream_seed(response_seed_, "response"));
    budget_left_ = budget_;
    pos_ = 0;
    terminated_ = false;
    prev_block_ = {};
    prev_multiplier_ = 1.0;
    return state_at(0);
}

Env::StepResult AmdpEnv::step(int action) {
    if (terminated_) throw ContractError("AmdpEnv: step on a terminated episode");
    double alpha = price_grid_.alpha(action);
    AmdpBlockStats block;
    double pur = 0.0;
    std::size_t end = std::min(pos_ + static_cast<std::size_t>(block_size_), mine_.size());
    for (; pos_ < end; ++pos_) {
        const AuctionRequest* req = mine_[pos_];
        const Participant* self = req->find(ad_id_);
        double bid = (strict_budget_ && budget_left_ <= 0.0) ? 0.0 : alpha * self->pcvr;
        Resolved r;
        if (bid > 0.0)
            r = resolve_auction(*req, {{ad_id_, bid}}, *profile_, rng_);
        AdImpression imp = impression_for(r, *self);
        if (imp.clicked) budget_left_ -= imp.price_per_click;
        ++block.auctions;
        block.pcvr_sum += imp.pcvr;
        if (imp.won) ++block.wins;
        if (imp.clicked) {
            ++block.clicks;
            block.cost += imp.price_per_click;
        }
        block.pur_amt += imp.purchase_amount;
        pur += imp.purchase_amount;
    }
    prev_block_ = block;
    prev_multiplier_ = ActionGrid::multiplier(action);
    StepResult out;
    out.reward = pur;
    out.budget_violated = !strict_budget_ && budget_left_ < 0.0;
    out.done = pos_ >= mine_.size() || out.budget_violated;
    out.next = state_at(pos_);
    out.next.terminal = out.next.terminal || out.done;
    if (out.done) terminated_ = true;
    return out;
}

} // namespace ssrtb
