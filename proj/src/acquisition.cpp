#include "resdepth/acquisition.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>

#include "resdepth/error.hpp"

namespace resdepth {

void AcquisitionMeta::validate() const {
    if (image_id.empty()) throw InputError("acquisition record without image_id");
    auto in = [](double v, double lo, double hi) { return v >= lo && v < hi; };
    if (!in(azimuth, 0.0, 360.0))
        throw InputError(image_id + ": azimuth " + std::to_string(azimuth) + " outside [0, 360)");
    if (!in(off_nadir, 0.0, 90.0))
        throw InputError(image_id + ": off_nadir " + std::to_string(off_nadir) + " outside [0, 90)");
    if (!in(sun_azimuth, 0.0, 360.0))
        throw InputError(image_id + ": sun_azimuth " + std::to_string(sun_azimuth) +
                         " outside [0, 360)");
    if (!(sun_elevation >= 0.0 && sun_elevation <= 90.0))
        throw InputError(image_id + ": sun_elevation " + std::to_string(sun_elevation) +
                         " outside [0, 90]");
}

SelectionCriteria SelectionCriteria::matching() {
    return {5.0, 30.0, 40.0, 35.0, PairProfile::matching};
}

SelectionCriteria SelectionCriteria::refinement() {
    return {10.0, 28.0, 40.0, 35.0, PairProfile::refinement};
}

void SelectionCriteria::validate() const {
    if (!(intersection_min >= 0.0 && intersection_min < intersection_max))
        throw ConfigError("selection criteria need 0 <= intersection_min < intersection_max");
    if (!(incidence_max > 0.0)) throw ConfigError("incidence_max must be > 0");
    if (!(sun_diff_max >= 0.0)) throw ConfigError("sun_diff_max must be >= 0");
}

Vec3 view_vector(double azimuth_deg, double off_nadir_deg) {
    const double az = deg_to_rad(azimuth_deg);
    const double off = deg_to_rad(off_nadir_deg);
    return {std::sin(az) * std::sin(off), std::cos(az) * std::sin(off), std::cos(off)};
}

namespace {

double angle_between_deg(Vec3 a, Vec3 b) {
    const double c = std::clamp(dot(a, b), -1.0, 1.0);
    return rad_to_deg(std::acos(c));
}

Vec3 sun_vector(const AcquisitionMeta& m) {
    return view_vector(m.sun_azimuth, 90.0 - m.sun_elevation);
}

} // namespace

double intersection_angle(const AcquisitionMeta& a, const AcquisitionMeta& b) {
    return angle_between_deg(view_vector(a.azimuth, a.off_nadir),
                             view_vector(b.azimuth, b.off_nadir));
}

double sun_angle_difference(const AcquisitionMeta& a, const AcquisitionMeta& b) {
    return angle_between_deg(sun_vector(a), sun_vector(b));
}

std::vector<StereoPair> select_pairs(const std::vector<AcquisitionMeta>& images,
                                     const SelectionCriteria& criteria) {
    criteria.validate();
    for (const auto& m : images) m.validate();

    std::vector<StereoPair> pairs;
    if (images.size() < 2) return pairs;

    const bool refinement = criteria.profile == PairProfile::refinement;
    for (std::size_t i = 0; i < images.size(); ++i) {
        for (std::size_t j = i + 1; j < images.size(); ++j) {
            const AcquisitionMeta& a = images[i];
            const AcquisitionMeta& b = images[j];
            if (refinement) {
                if (a.snow || b.snow) continue;
                if (!a.footprint_covers_area || !b.footprint_covers_area) continue;
            }
            const double inter = intersection_angle(a, b);
            if (inter < criteria.intersection_min || inter > criteria.intersection_max) continue;
            const double incidence = 0.5 * (a.off_nadir + b.off_nadir);
            if (incidence > criteria.incidence_max) continue;
            const double sun = sun_angle_difference(a, b);
            if (sun > criteria.sun_diff_max) continue;
            pairs.push_back({a.image_id, b.image_id, inter, incidence, sun});
        }
    }
    return pairs;
}

BaselineClass baseline_class(const AcquisitionMeta& a, const AcquisitionMeta& b) {
    const Vec3 va = view_vector(a.azimuth, a.off_nadir);
    const Vec3 vb = view_vector(b.azimuth, b.off_nadir);
    const double bx = vb.x - va.x;
    const double by = vb.y - va.y;
    // |N component| >= |E component| <=> baseline azimuth within 45 deg of N/S.
    return std::abs(by) >= std::abs(bx) ? BaselineClass::north_south : BaselineClass::west_east;
}

namespace {

struct PairInfo {
    int index;
    BaselineClass cls;
    int component;
};

} // namespace

PairPartition partition_pairs(const std::vector<StereoPair>& pairs,
                              const std::vector<AcquisitionMeta>& images) {
    PairPartition out;
    if (pairs.empty()) return out;

    std::map<std::string, const AcquisitionMeta*> by_id;
    for (const auto& m : images) by_id[m.image_id] = &m;
    auto meta = [&](const std::string& id) -> const AcquisitionMeta& {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw InputError("pair references unknown image '" + id + "'");
        return *it->second;
    };

    const int n = static_cast<int>(pairs.size());
    std::vector<PairInfo> info(n);

    // Union-find over pairs; pairs sharing an image must land in one group.
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    std::map<std::string, int> first_pair_with_image;
    for (int i = 0; i < n; ++i) {
        info[i] = {i, baseline_class(meta(pairs[i].left), meta(pairs[i].right)), 0};
        for (const std::string& id : {pairs[i].left, pairs[i].right}) {
            auto [it, inserted] = first_pair_with_image.try_emplace(id, i);
            if (!inserted) parent[find(i)] = find(it->second);
        }
    }

    // Component class tallies, in first-appearance order.
    std::map<int, int> component_id;
    std::vector<std::array<int, 2>> comp_counts; // [n-s, w-e]
    for (int i = 0; i < n; ++i) {
        const int root = find(i);
        auto [it, inserted] = component_id.try_emplace(root, static_cast<int>(comp_counts.size()));
        if (inserted) comp_counts.push_back({0, 0});
        info[i].component = it->second;
        comp_counts[it->second][info[i].cls == BaselineClass::north_south ? 0 : 1]++;
    }

    const int n_comp = static_cast<int>(comp_counts.size());
    int total_ns = 0, total_we = 0;
    for (const auto& c : comp_counts) {
        total_ns += c[0];
        total_we += c[1];
    }

    auto balanced = [&](int ns_a, int we_a) {
        return std::abs(2 * ns_a - total_ns) <= 1 && std::abs(2 * we_a - total_we) <= 1;
    };

    std::uint64_t chosen_mask = 0;
    bool found = false;
    if (n_comp <= 20) {
        // Among balanced assignments prefer the largest group A (ties:
        // smallest mask), so a lone pair lands in A.
        int best_size = -1;
        for (std::uint64_t mask = 0; mask < (1ull << n_comp); ++mask) {
            int ns_a = 0, we_a = 0;
            for (int c = 0; c < n_comp; ++c) {
                if (mask & (1ull << c)) {
                    ns_a += comp_counts[c][0];
                    we_a += comp_counts[c][1];
                }
            }
            if (balanced(ns_a, we_a) && ns_a + we_a > best_size) {
                best_size = ns_a + we_a;
                chosen_mask = mask;
                found = true;
            }
        }
    } else {
        // Greedy: assign large components first to the lighter side per class.
        std::vector<int> order(n_comp);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return comp_counts[a][0] + comp_counts[a][1] > comp_counts[b][0] + comp_counts[b][1];
        });
        int ns_a = 0, we_a = 0, ns_b = 0, we_b = 0;
        for (int c : order) {
            const int da = std::abs(ns_a + comp_counts[c][0] - ns_b) +
                           std::abs(we_a + comp_counts[c][1] - we_b);
            const int db = std::abs(ns_a - ns_b - comp_counts[c][0]) +
                           std::abs(we_a - we_b - comp_counts[c][1]);
            if (da <= db) {
                chosen_mask |= (1ull << c);
                ns_a += comp_counts[c][0];
                we_a += comp_counts[c][1];
            } else {
                ns_b += comp_counts[c][0];
                we_b += comp_counts[c][1];
            }
        }
        found = balanced(ns_a, we_a);
    }

    if (found) {
        for (int i = 0; i < n; ++i) {
            if (chosen_mask & (1ull << info[i].component))
                out.group_a.push_back(pairs[i]);
            else
                out.group_b.push_back(pairs[i]);
        }
        out.image_disjoint = true;
        return out;
    }

    // No split is both image-disjoint and balanced: balance at pair level
    // by alternating within each orientation class, flag the overlap.
    int seen[2] = {0, 0};
    for (int i = 0; i < n; ++i) {
        const int cls = info[i].cls == BaselineClass::north_south ? 0 : 1;
        if (seen[cls]++ % 2 == 0)
            out.group_a.push_back(pairs[i]);
        else
            out.group_b.push_back(pairs[i]);
    }
    out.image_disjoint = false;
    return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) {
        // trim surrounding spaces
        const auto b = field.find_first_not_of(" \t\r");
        const auto e = field.find_last_not_of(" \t\r");
        fields.push_back(b == std::string::npos ? "" : field.substr(b, e - b + 1));
    }
    return fields;
}

} // namespace

std::vector<AcquisitionMeta> read_acquisition_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");

    std::vector<AcquisitionMeta> images;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        auto fields = split_csv_line(line);
        if (!fields.empty() && fields[0] == "image_id") continue; // header row
        if (fields.size() != 8)
            throw ParseError("line " + std::to_string(line_no) + ": expected 8 CSV fields, got " +
                             std::to_string(fields.size()));
        AcquisitionMeta m;
        m.image_id = fields[0];
        try {
            m.azimuth = std::stod(fields[1]);
            m.off_nadir = std::stod(fields[2]);
            m.sun_azimuth = std::stod(fields[3]);
            m.sun_elevation = std::stod(fields[4]);
            m.date = fields[5];
            m.snow = std::stoi(fields[6]) != 0;
            m.footprint_covers_area = std::stoi(fields[7]) != 0;
        } catch (const std::exception&) {
            throw ParseError("line " + std::to_string(line_no) + ": malformed numeric field");
        }
        m.validate();
        images.push_back(std::move(m));
    }
    return images;
}

} // namespace resdepth
