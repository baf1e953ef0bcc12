#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ssrtb/bidder.hpp"
#include "ssrtb/dqn.hpp"
#include "ssrtb/simulator.hpp"

namespace ssrtb {

// r = (1 - lambda) * own + lambda * mean over all agents.
double mixed_reward(double own_reward, const std::vector<double>& all_rewards,
                    double lambda);

struct AgentSetup {
    std::string ad_id;
    double budget = 0.0;
    ActionGrid grid;
    FeatureNorms norms;
    TrainerConfig trainer;
};

struct GlobalLogRow {
    int episode = 0;
    std::string ad_id;
    double cost = 0.0;
    double pur_amt = 0.0;
    double mixed_reward = 0.0; // episode total of the blended reward
};

struct MassiveResult {
    std::vector<QNetwork> nets; // one per agent, same order as the setups
    std::vector<RmsProp> opts;
    std::vector<TrainLog> logs;
    std::vector<GlobalLogRow> global_log;
};

// Independent learners in a shared market. Per hour, every agent picks an
// action from its episode net, the hour of auctions resolves once with all
// bids in, and each agent stores its transition with the blended reward.
// An agent whose budget goes negative stops learning and bids 0 for the rest
// of that episode; the market keeps running for the others.
MassiveResult train_massive(const std::vector<AgentSetup>& agents,
                            const std::function<const AuctionLog&(int episode)>& day_for,
                            const DayProfile& profile, double lambda, int episodes,
                            std::uint64_t seed);

} // namespace ssrtb
