#include "nextview/poseplan.hpp"

namespace nextview::poseplan {

std::array<CameraPose, 6> target_poses() {
    std::array<CameraPose, 6> poses;
    for (int i = 0; i < 6; ++i) {
        poses[i].azimuth_deg = 30.0 + 60.0 * i;
        poses[i].elevation_deg = (i % 2 == 0) ? 20.0 : -10.0;
    }
    return poses;
}

StepPlan step_plan(int k) {
    if (k < 1 || k > 3) throw std::invalid_argument("step_plan: k must be in {1,2,3}");
    StepPlan plan;
    plan.k = k;
    for (int v = 1; v <= 2 * k - 1; ++v) plan.condition_view_ids.push_back(v);
    plan.target_view_ids = {2 * k, 2 * k + 1};
    return plan;
}

SequenceOrder make_order(OrderTag tag) {
    SequenceOrder o;
    o.tag = tag;
    switch (tag) {
        case OrderTag::Normal:
            o.row_permutation = {1, 2, 3};
            break;
        case OrderTag::Reverse:
            o.row_permutation = {3, 2, 1};
            break;
        case OrderTag::Random:
            // middle row first, remaining rows in their original order
            o.row_permutation = {2, 1, 3};
            break;
    }
    return o;
}

std::array<int, 3> reorder(const SequenceOrder& order) { return order.row_permutation; }

double elevation_of(int view_id, double input_elevation_deg) {
    if (view_id == 1) return input_elevation_deg;
    if (view_id < 2 || view_id > 7) throw std::invalid_argument("elevation_of: unknown view id");
    return (view_id % 2 == 0) ? 20.0 : -10.0;
}

}  // namespace nextview::poseplan
