#pragma once

#include <cstdint>
#include <vector>

namespace fedbench {

enum class Direction : uint8_t { kUp = 0, kDown = 1 };

struct CommEvent {
    uint32_t round;
    uint32_t client;
    Direction direction;
    uint64_t param_count;   // model parameters in this transmission
    uint64_t extra_scalars; // side-channel scalars (control values, sensitivities)
};

struct FlopEvent {
    uint32_t round;
    uint32_t client;
    uint64_t flops;
};

// Append-only communication and compute record. Totals are pure folds over
// the event list; nothing is ever mutated or removed.
class CostLedger {
public:
    void record_comm(uint32_t round, uint32_t client, Direction direction, uint64_t param_count,
                     uint64_t extra_scalars = 0);
    void record_flops(uint32_t round, uint32_t client, uint64_t flops);

    const std::vector<CommEvent>& events() const { return events_; }
    const std::vector<FlopEvent>& flop_events() const { return flop_events_; }

    uint64_t total_transmitted() const; // params + extra scalars
    uint64_t total_model_params() const;
    uint64_t total_extra_scalars() const;
    uint64_t total_flops() const;

    uint64_t transmitted_through_round(uint32_t round) const;
    uint64_t flops_through_round(uint32_t round) const;

    size_t model_event_count(Direction direction) const; // events actually carrying parameters

private:
    std::vector<CommEvent> events_;
    std::vector<FlopEvent> flop_events_;
};

// Transmitted scalars are 32-bit reals.
constexpr uint64_t bytes_for(uint64_t scalars) { return 4 * scalars; }

// Closed-form totals for a full run, used as the independent oracle against
// event-folded ledger totals.
struct CostModel {
    uint64_t model_params = 0;     // P: every scalar in the model
    uint64_t bn_layer_params = 0;  // parameters belonging to batchnorm layers
    uint64_t trainable_layers = 0; // layers with at least one trainable parameter
};

enum class CommProfile {
    kFullModel,       // P * E * K * 2
    kStartScalar,     // P * E * K * 2 + K
    kPerRoundScalar,  // P * E * K * 2 + K + E * K
    kLayerVector,     // P * E * K * 2 + K + L * E * K
    kBnExcluded,      // (P - P_bn) * E * K * 2
    kOneShot,         // P * K
};

uint64_t expected_transmitted(CommProfile profile, uint64_t rounds, uint64_t clients,
                              const CostModel& model);

} // namespace fedbench
