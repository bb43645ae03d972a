#pragma once

#include <string>
#include <vector>

#include "resdepth/geom.hpp"

namespace resdepth {

// Per-image viewing and sun geometry.
struct AcquisitionMeta {
    std::string image_id;
    double azimuth = 0.0;        // deg, [0, 360)
    double off_nadir = 0.0;      // deg, [0, 90)
    double sun_azimuth = 0.0;    // deg, [0, 360)
    double sun_elevation = 90.0; // deg, [0, 90]
    std::string date;            // ISO-8601 calendar date
    bool snow = false;
    bool footprint_covers_area = true;

    void validate() const;
};

enum class PairProfile { matching, refinement };

struct SelectionCriteria {
    double intersection_min = 5.0;
    double intersection_max = 30.0;
    double incidence_max = 40.0;
    double sun_diff_max = 35.0;
    PairProfile profile = PairProfile::matching;

    static SelectionCriteria matching();   // [5, 30] / 40 / 35
    static SelectionCriteria refinement(); // [10, 28] / 40 / 35, snow & footprint filters

    void validate() const;
};

struct StereoPair {
    std::string left;
    std::string right;
    double intersection_angle = 0.0; // deg
    double mean_incidence = 0.0;     // deg
    double sun_diff = 0.0;           // deg
};

// Unit vector toward the sensor: (sin az * sin off, cos az * sin off, cos off).
Vec3 view_vector(double azimuth_deg, double off_nadir_deg);

// Angle between the two view rays in object space, degrees in [0, 180].
double intersection_angle(const AcquisitionMeta& a, const AcquisitionMeta& b);

// Angular distance between the two sun directions, degrees.
double sun_angle_difference(const AcquisitionMeta& a, const AcquisitionMeta& b);

// All unordered pairs passing the criteria (closed angle interval). Under
// the refinement profile both images must be snow-free and footprint-covering.
std::vector<StereoPair> select_pairs(const std::vector<AcquisitionMeta>& images,
                                     const SelectionCriteria& criteria);

enum class BaselineClass { north_south, west_east };

// Orientation of the pair's baseline, from the difference of the two
// ground-projected view directions: within +-45 deg of N/S axis -> N-S.
BaselineClass baseline_class(const AcquisitionMeta& a, const AcquisitionMeta& b);

struct PairPartition {
    std::vector<StereoPair> group_a;
    std::vector<StereoPair> group_b;
    // False when no image-disjoint assignment with balanced orientation
    // classes exists and the pair-level fallback split was returned.
    bool image_disjoint = true;
};

// Split pairs into two groups balancing N-S / W-E counts (difference <= 1
// per class) and, when achievable, sharing no image between the groups.
PairPartition partition_pairs(const std::vector<StereoPair>& pairs,
                              const std::vector<AcquisitionMeta>& images);

// CSV rows: image_id,azimuth,off_nadir,sun_azimuth,sun_elevation,date,snow,footprint
std::vector<AcquisitionMeta> read_acquisition_csv(const std::string& path);

} // namespace resdepth
