#pragma once

#include <array>
#include <stdexcept>
#include <vector>

namespace nextview::poseplan {

// Azimuth is stored relative to the input view's azimuth, in [0,360);
// elevation is absolute, positive above the equatorial plane looking down.
struct CameraPose {
    double azimuth_deg = 0.0;
    double elevation_deg = 0.0;
};

// Step k of the autoregression conditions on views {1..2k-1} and predicts
// views {2k, 2k+1}. View 1 is the input; 2..7 are targets in sequence order.
struct StepPlan {
    int k = 0;
    std::vector<int> condition_view_ids;
    std::array<int, 2> target_view_ids{};
};

enum class OrderTag { Normal, Reverse, Random };

struct SequenceOrder {
    OrderTag tag = OrderTag::Normal;
    std::array<int, 3> row_permutation{1, 2, 3};
};

// The six target poses in grid order (row-major, nearest row first):
// azimuths 30,90,...,330 relative to the input, elevations alternating 20/-10.
std::array<CameraPose, 6> target_poses();

StepPlan step_plan(int k);

SequenceOrder make_order(OrderTag tag);

// Row ids (1-based, canonical) in generation order.
std::array<int, 3> reorder(const SequenceOrder& order);

// Elevation of a combined view id; the input view (id 1) reports its own
// sampled elevation, supplied by the caller.
double elevation_of(int view_id, double input_elevation_deg);

}  // namespace nextview::poseplan
