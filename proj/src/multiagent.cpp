#include "ssrtb/multiagent.hpp"

#include <algorithm>
#include <memory>

#include "ssrtb/errors.hpp"

namespace ssrtb {

double mixed_reward(double own_reward, const std::vector<double>& all_rewards,
                    double lambda) {
    if (lambda < 0.0 || lambda > 1.0)
        throw ContractError("mixed_reward: lambda out of [0,1]");
    if (all_rewards.empty()) throw ContractError("mixed_reward: empty reward pool");
    double sum = 0.0;
    for (double r : all_rewards) sum += r;
    double mean = sum / static_cast<double>(all_rewards.size());
    return (1.0 - lambda) * own_reward + lambda * mean;
}

MassiveResult train_massive(const std::vector<AgentSetup>& agents,
                            const std::function<const AuctionLog&(int episode)>& day_for,
                            const DayProfile& profile, double lambda, int episodes,
                            std::uint64_t seed) {
    if (agents.empty()) throw ContractError("train_massive: no agents");
    if (lambda < 0.0 || lambda > 1.0)
        throw ContractError("train_massive: lambda out of [0,1]");
    const std::size_t n = agents.size();

    std::vector<std::unique_ptr<AgentLearner>> learners;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(agents[i].budget > 0.0))
            throw ContractError("train_massive: budget must be positive");
        agents[i].norms.validate();
        learners.push_back(std::make_unique<AgentLearner>(
            agents[i].trainer, substream_seed(seed, "agent", i)));
    }

    MassiveResult result;
    for (int ep = 0; ep < episodes; ++ep) {
        const AuctionLog& log = day_for(ep);
        Rng market_rng = substream(seed, "market", static_cast<std::uint64_t>(ep));

        // Pre-index the day's auctions by hour once per episode.
        std::array<std::vector<const AuctionRequest*>, kEpisodeSteps> by_hour;
        for (const auto& req : log.auctions) {
            int h = std::clamp(static_cast<int>(req.timestamp / 3600.0), 0,
                               kEpisodeSteps - 1);
            by_hour[h].push_back(&req);
        }

        struct EpState {
            double budget_left;
            bool learning = true;
            MdpState state;
            int action = 0;
            double alpha = 0.0;
            double episode_pur = 0.0;
            double episode_cost = 0.0;
            double episode_mixed = 0.0;
        };
        std::vector<EpState> st(n);
        for (std::size_t i = 0; i < n; ++i) {
            st[i].budget_left = agents[i].budget;
            st[i].state = build_state(agents[i].budget, 1, HourAggregate{}, 0.0,
                                      agents[i].norms);
        }

        for (int t = 1; t <= kEpisodeSteps; ++t) {
            for (std::size_t i = 0; i < n; ++i) {
                if (st[i].learning) {
                    st[i].action = learners[i]->act(st[i].state);
                    st[i].alpha = agents[i].grid.alpha(st[i].action);
                } else {
                    st[i].alpha = 0.0; // out of budget, out of the market
                }
            }

            std::vector<std::vector<AdImpression>> hour_imps(n);
            for (const AuctionRequest* req : by_hour[t - 1]) {
                std::map<std::string, double> bids;
                std::vector<std::pair<std::size_t, const Participant*>> present;
                for (std::size_t i = 0; i < n; ++i) {
                    const Participant* self = req->find(agents[i].ad_id);
                    if (!self) continue;
                    present.emplace_back(i, self);
                    bids[agents[i].ad_id] = st[i].alpha * self->pcvr;
                }
                if (present.empty()) continue;
                bool any = std::any_of(bids.begin(), bids.end(),
                                       [](const auto& kv) { return kv.second > 0.0; });
                std::vector<RankedEntry> ranked;
                std::map<std::string, double> prices;
                AuctionOutcome outcome;
                if (any) {
                    ranked = rank_ads(*req, bids);
                    if (!ranked.empty()) {
                        std::map<std::string, double> bidscores;
                        for (const auto& p : req->participants)
                            bidscores[p.ad_id] = p.bidscore;
                        prices = price_slots(ranked, bidscores, profile.reserve);
                        outcome = simulate_response(*req, ranked, prices, market_rng,
                                                    profile.position_bias);
                    }
                }
                for (auto& [i, self] : present) {
                    AdImpression imp;
                    imp.pcvr = self->pcvr;
                    for (const auto& slot : outcome.slots) {
                        if (slot.ad_id != self->ad_id) continue;
                        imp.won = true;
                        imp.rank = slot.rank;
                        imp.price_per_click = slot.price_per_click;
                        imp.clicked = slot.clicked;
                        imp.purchased = slot.purchased;
                        imp.purchase_amount = slot.purchase_amount;
                        break;
                    }
                    if (imp.clicked) st[i].budget_left -= imp.price_per_click;
                    hour_imps[i].push_back(imp);
                }
            }

            // Barrier: every agent's hour resolved before any reward is formed.
            std::vector<HourAggregate> aggs(n);
            std::vector<double> rewards(n);
            for (std::size_t i = 0; i < n; ++i) {
                aggs[i] = aggregate_hour(hour_imps[i]);
                rewards[i] = step_reward(aggs[i]);
                st[i].episode_pur += rewards[i];
                st[i].episode_cost += aggs[i].cost;
            }
            for (std::size_t i = 0; i < n; ++i) {
                MdpState next = build_state(st[i].budget_left, std::min(t + 1, kEpisodeSteps),
                                            aggs[i], st[i].alpha, agents[i].norms);
                next.terminal = t == kEpisodeSteps;
                if (st[i].learning) {
                    double r = mixed_reward(rewards[i], rewards, lambda);
                    st[i].episode_mixed += r;
                    if (st[i].budget_left < 0.0) {
                        st[i].learning = false; // transition discarded
                    } else {
                        learners[i]->observe(st[i].state, st[i].action, r, next,
                                             next.terminal);
                    }
                }
                st[i].state = next;
            }
        }

        for (std::size_t i = 0; i < n; ++i) {
            learners[i]->end_episode(st[i].episode_pur);
            result.global_log.push_back({ep + 1, agents[i].ad_id, st[i].episode_cost,
                                         st[i].episode_pur, st[i].episode_mixed});
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        result.nets.push_back(learners[i]->train_net());
        result.opts.push_back(learners[i]->optimizer());
        result.logs.push_back(std::move(learners[i]->log));
    }
    return result;
}

} // namespace ssrtb
