#include "fedbench/ledger.hpp"

namespace fedbench {

void CostLedger::record_comm(uint32_t round, uint32_t client, Direction direction, uint64_t param_count,
                             uint64_t extra_scalars) {
    events_.push_back(CommEvent{round, client, direction, param_count, extra_scalars});
}

void CostLedger::record_flops(uint32_t round, uint32_t client, uint64_t flops) {
    flop_events_.push_back(FlopEvent{round, client, flops});
}

uint64_t CostLedger::total_transmitted() const {
    uint64_t t = 0;
    for (const auto& e : events_) t += e.param_count + e.extra_scalars;
    return t;
}

uint64_t CostLedger::total_model_params() const {
    uint64_t t = 0;
    for (const auto& e : events_) t += e.param_count;
    return t;
}

uint64_t CostLedger::total_extra_scalars() const {
    uint64_t t = 0;
    for (const auto& e : events_) t += e.extra_scalars;
    return t;
}

uint64_t CostLedger::total_flops() const {
    uint64_t t = 0;
    for (const auto& e : flop_events_) t += e.flops;
    return t;
}

uint64_t CostLedger::transmitted_through_round(uint32_t round) const {
    uint64_t t = 0;
    for (const auto& e : events_)
        if (e.round <= round) t += e.param_count + e.extra_scalars;
    return t;
}

uint64_t CostLedger::flops_through_round(uint32_t round) const {
    uint64_t t = 0;
    for (const auto& e : flop_events_)
        if (e.round <= round) t += e.flops;
    return t;
}

size_t CostLedger::model_event_count(Direction direction) const {
    size_t n = 0;
    for (const auto& e : events_)
        if (e.direction == direction && e.param_count > 0) ++n;
    return n;
}

uint64_t expected_transmitted(CommProfile profile, uint64_t rounds, uint64_t clients,
                              const CostModel& model) {
    const uint64_t p = model.model_params;
    const uint64_t ek = rounds * clients;
    switch (profile) {
    case CommProfile::kFullModel: return p * ek * 2;
    case CommProfile::kStartScalar: return p * ek * 2 + clients;
    case CommProfile::kPerRoundScalar: return p * ek * 2 + clients + ek;
    case CommProfile::kLayerVector: return p * ek * 2 + clients + model.trainable_layers * ek;
    case CommProfile::kBnExcluded: return (p - model.bn_layer_params) * ek * 2;
    case CommProfile::kOneShot: return p * clients;
    }
    return 0;
}

} // namespace fedbench
