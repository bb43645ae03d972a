#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "resdepth/acquisition.hpp"
#include "resdepth/error.hpp"
#include "resdepth/rng.hpp"

using namespace resdepth;

namespace {

AcquisitionMeta meta(const std::string& id, double az, double off, double sun_az = 160.0,
                     double sun_el = 45.0, bool snow = false, bool footprint = true) {
    AcquisitionMeta m;
    m.image_id = id;
    m.azimuth = az;
    m.off_nadir = off;
    m.sun_azimuth = sun_az;
    m.sun_elevation = sun_el;
    m.date = "2017-06-01";
    m.snow = snow;
    m.footprint_covers_area = footprint;
    return m;
}

AcquisitionMeta random_meta(Rng& rng, int i) {
    return meta("img" + std::to_string(i), rng.uniform(0.0, 360.0), rng.uniform(0.0, 45.0),
                rng.uniform(0.0, 360.0), rng.uniform(10.0, 80.0), rng.uniform() < 0.15,
                rng.uniform() < 0.9);
}

// Independent brute-force re-derivation of the pair filter.
std::vector<StereoPair> brute_force_pairs(const std::vector<AcquisitionMeta>& images,
                                          const SelectionCriteria& crit) {
    auto vec = [](double az, double off) {
        const double a = az * kPi / 180.0, o = off * kPi / 180.0;
        return Vec3{std::sin(a) * std::sin(o), std::cos(a) * std::sin(o), std::cos(o)};
    };
    auto ang = [](Vec3 u, Vec3 v) {
        return std::acos(std::clamp(u.x * v.x + u.y * v.y + u.z * v.z, -1.0, 1.0)) * 180.0 / kPi;
    };
    std::vector<StereoPair> out;
    for (std::size_t i = 0; i < images.size(); ++i) {
        for (std::size_t j = i + 1; j < images.size(); ++j) {
            const auto& a = images[i];
            const auto& b = images[j];
            if (crit.profile == PairProfile::refinement) {
                if (a.snow || b.snow || !a.footprint_covers_area || !b.footprint_covers_area)
                    continue;
            }
            const double inter = ang(vec(a.azimuth, a.off_nadir), vec(b.azimuth, b.off_nadir));
            const double inc = 0.5 * (a.off_nadir + b.off_nadir);
            const double sun = ang(vec(a.sun_azimuth, 90.0 - a.sun_elevation),
                                   vec(b.sun_azimuth, 90.0 - b.sun_elevation));
            if (inter < crit.intersection_min || inter > crit.intersection_max) continue;
            if (inc > crit.incidence_max) continue;
            if (sun > crit.sun_diff_max) continue;
            out.push_back({a.image_id, b.image_id, inter, inc, sun});
        }
    }
    return out;
}

} // namespace

TEST_CASE("view_vector hits the derived trigonometric values") {
    auto v = view_vector(0.0, 0.0);
    CHECK(v.x == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(v.y == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(v.z == doctest::Approx(1.0).epsilon(1e-12));

    v = view_vector(90.0, 30.0);
    CHECK(v.x == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(v.y == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(v.z == doctest::Approx(std::sqrt(3.0) / 2.0).epsilon(1e-12));

    v = view_vector(180.0, 20.0);
    CHECK(v.x == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(v.y == doctest::Approx(-std::sin(deg_to_rad(20.0))).epsilon(1e-12));
    CHECK(v.z == doctest::Approx(std::cos(deg_to_rad(20.0))).epsilon(1e-12));

    Rng rng(1);
    for (int i = 0; i < 200; ++i) {
        v = view_vector(rng.uniform(0.0, 360.0), rng.uniform(0.0, 90.0));
        CHECK(std::abs(norm(v) - 1.0) <= 1e-12);
    }
}

TEST_CASE("intersection_angle: examples and symmetry/triangle properties") {
    const auto a = meta("a", 123.0, 17.0);
    CHECK(intersection_angle(a, a) <= 1e-6); // acos roundoff near a unit dot

    CHECK(intersection_angle(meta("a", 0.0, 20.0), meta("b", 180.0, 20.0)) ==
          doctest::Approx(40.0).epsilon(1e-9));

    CHECK(intersection_angle(meta("a", 0.0, 0.0), meta("b", 90.0, 0.0)) <= 1e-6);

    Rng rng(2);
    for (int i = 0; i < 100; ++i) {
        const auto x = random_meta(rng, 0);
        const auto y = random_meta(rng, 1);
        const auto z = random_meta(rng, 2);
        const double xy = intersection_angle(x, y);
        CHECK(xy == doctest::Approx(intersection_angle(y, x)).epsilon(1e-12));
        CHECK(xy >= 0.0);
        CHECK(xy <= 180.0);
        CHECK(xy <= intersection_angle(x, z) + intersection_angle(z, y) + 1e-9);
    }
}

TEST_CASE("sun_angle_difference: examples") {
    const auto a = meta("a", 0, 10, 200.0, 40.0);
    CHECK(sun_angle_difference(a, a) == doctest::Approx(0.0));

    CHECK(sun_angle_difference(meta("a", 0, 0, 150.0, 40.0), meta("b", 0, 0, 150.0, 50.0)) ==
          doctest::Approx(10.0).epsilon(1e-9));

    CHECK(sun_angle_difference(meta("a", 0, 0, 10.0, 90.0), meta("b", 0, 0, 260.0, 90.0)) ==
          doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("select_pairs: Table-style boundary and snow cases") {
    // intersection 15 deg, incidence 25, tiny sun diff, snow-free.
    {
        auto a = meta("a", 0.0, 25.0, 160.0, 45.0);
        auto b = meta("b", 180.0, 25.0 - 10.0, 160.0, 45.0);
        // adjust to get intersection inside [10, 28]: use 0/180 off 7.5 -> 15
        a = meta("a", 0.0, 7.5);
        b = meta("b", 180.0, 7.5);
        const auto pairs = select_pairs({a, b}, SelectionCriteria::refinement());
        REQUIRE(pairs.size() == 1);
        CHECK(pairs[0].intersection_angle == doctest::Approx(15.0).epsilon(1e-9));
        CHECK(pairs[0].mean_incidence == doctest::Approx(7.5));
    }

    // intersection exactly 30: accepted by matching [5,30], rejected by refinement [10,28].
    {
        const auto a = meta("a", 0.0, 15.0);
        const auto b = meta("b", 180.0, 15.0);
        CHECK(intersection_angle(a, b) == doctest::Approx(30.0).epsilon(1e-9));
        CHECK(select_pairs({a, b}, SelectionCriteria::matching()).size() == 1);
        CHECK(select_pairs({a, b}, SelectionCriteria::refinement()).empty());
    }

    // One image with snow: rejected under refinement regardless of angles.
    {
        const auto a = meta("a", 0.0, 7.5, 160.0, 45.0, true);
        const auto b = meta("b", 180.0, 7.5);
        CHECK(select_pairs({a, b}, SelectionCriteria::refinement()).empty());
        CHECK(select_pairs({a, b}, SelectionCriteria::matching()).size() == 1);
    }

    // Fewer than two images: empty, not an error.
    CHECK(select_pairs({meta("a", 0, 10)}, SelectionCriteria::matching()).empty());
    CHECK(select_pairs({}, SelectionCriteria::matching()).empty());
}

TEST_CASE("select_pairs equals the brute-force oracle and ignores input order") {
    Rng rng(42);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<AcquisitionMeta> images;
        const int n = 2 + static_cast<int>(rng.uniform_int(19));
        for (int i = 0; i < n; ++i) images.push_back(random_meta(rng, i));

        for (auto crit : {SelectionCriteria::matching(), SelectionCriteria::refinement()}) {
            const auto got = select_pairs(images, crit);
            const auto want = brute_force_pairs(images, crit);
            REQUIRE(got.size() == want.size());
            for (std::size_t i = 0; i < got.size(); ++i) {
                CHECK(got[i].left == want[i].left);
                CHECK(got[i].right == want[i].right);
                CHECK(got[i].intersection_angle ==
                      doctest::Approx(want[i].intersection_angle).epsilon(1e-12));
            }

            // Order invariance: shuffle and compare pair SETS.
            auto shuffled = images;
            for (int i = n - 1; i > 0; --i)
                std::swap(shuffled[i], shuffled[rng.uniform_int(i + 1)]);
            auto key = [](const StereoPair& p) {
                return p.left < p.right ? p.left + "|" + p.right : p.right + "|" + p.left;
            };
            std::set<std::string> set_a, set_b;
            for (const auto& p : got) set_a.insert(key(p));
            for (const auto& p : select_pairs(shuffled, crit)) set_b.insert(key(p));
            CHECK(set_a == set_b);
        }
    }
}

TEST_CASE("partition_pairs: balanced classes on disjoint images") {
    // 4 N-S pairs and 4 W-E pairs, all on distinct images.
    std::vector<AcquisitionMeta> images;
    std::vector<StereoPair> pairs;
    int id = 0;
    auto add_pair = [&](double az1, double az2) {
        auto a = meta("p" + std::to_string(id++), az1, 10.0);
        auto b = meta("p" + std::to_string(id++), az2, 20.0);
        images.push_back(a);
        images.push_back(b);
        pairs.push_back({a.image_id, b.image_id, intersection_angle(a, b),
                         0.5 * (a.off_nadir + b.off_nadir), sun_angle_difference(a, b)});
    };
    for (int i = 0; i < 4; ++i) add_pair(0.0, 180.0);  // N-S baselines
    for (int i = 0; i < 4; ++i) add_pair(90.0, 270.0); // W-E baselines

    const auto part = partition_pairs(pairs, images);
    CHECK(part.image_disjoint);
    CHECK(part.group_a.size() + part.group_b.size() == 8);

    auto count_class = [&](const std::vector<StereoPair>& group, BaselineClass cls) {
        int n = 0;
        for (const auto& p : group) {
            const auto* ma = &images[0];
            const auto* mb = &images[0];
            for (const auto& m : images) {
                if (m.image_id == p.left) ma = &m;
                if (m.image_id == p.right) mb = &m;
            }
            if (baseline_class(*ma, *mb) == cls) ++n;
        }
        return n;
    };
    CHECK(count_class(part.group_a, BaselineClass::north_south) == 2);
    CHECK(count_class(part.group_a, BaselineClass::west_east) == 2);
    CHECK(count_class(part.group_b, BaselineClass::north_south) == 2);
    CHECK(count_class(part.group_b, BaselineClass::west_east) == 2);

    // No image on both sides.
    std::set<std::string> ids_a, ids_b;
    for (const auto& p : part.group_a) {
        ids_a.insert(p.left);
        ids_a.insert(p.right);
    }
    for (const auto& p : part.group_b) {
        ids_b.insert(p.left);
        ids_b.insert(p.right);
    }
    for (const auto& i : ids_a) CHECK(ids_b.count(i) == 0);
}

TEST_CASE("partition_pairs: single pair goes to group A") {
    const auto a = meta("a", 0.0, 7.5);
    const auto b = meta("b", 180.0, 7.5);
    const StereoPair p{"a", "b", 15.0, 7.5, 0.0};
    const auto part = partition_pairs({p}, {a, b});
    CHECK(part.group_a.size() == 1);
    CHECK(part.group_b.empty());
}

TEST_CASE("partition_pairs: groups are disjoint and exhaustive on a 15-pair set") {
    // Shared images force the component logic; 15 pairs total.
    Rng rng(31);
    std::vector<AcquisitionMeta> images;
    for (int i = 0; i < 10; ++i) images.push_back(random_meta(rng, i));
    std::vector<StereoPair> pairs;
    for (int i = 0; i < 15; ++i) {
        const int a = static_cast<int>(rng.uniform_int(10));
        int b = static_cast<int>(rng.uniform_int(10));
        if (b == a) b = (b + 1) % 10;
        pairs.push_back({images[a].image_id, images[b].image_id,
                         intersection_angle(images[a], images[b]),
                         0.5 * (images[a].off_nadir + images[b].off_nadir),
                         sun_angle_difference(images[a], images[b])});
    }
    const auto part = partition_pairs(pairs, images);
    CHECK(part.group_a.size() + part.group_b.size() == 15);

    // Every input pair appears exactly once across the two groups.
    std::multiset<std::string> seen;
    for (const auto& p : part.group_a) seen.insert(p.left + "|" + p.right);
    for (const auto& p : part.group_b) seen.insert(p.left + "|" + p.right);
    std::multiset<std::string> want;
    for (const auto& p : pairs) want.insert(p.left + "|" + p.right);
    CHECK(seen == want);

    // Empty input: two empty groups.
    const auto empty = partition_pairs({}, images);
    CHECK(empty.group_a.empty());
    CHECK(empty.group_b.empty());
}

TEST_CASE("acquisition CSV ingestion and validation") {
    namespace fs = std::filesystem;
    const auto path = (fs::temp_directory_path() / "images.csv").string();
    {
        std::ofstream out(path);
        out << "image_id,azimuth,off_nadir,sun_azimuth,sun_elevation,date,snow,footprint\n";
        out << "wv_01, 35.0, 12.5, 160.0, 42.0, 2016-05-03, 0, 1\n";
        out << "wv_02,210.0, 27.0, 155.0, 38.0, 2017-01-20, 1, 1\n";
        out << "# a comment line\n";
        out << "wv_03,100.0,  5.0, 170.0, 55.0, 2018-08-11, 0, 0\n";
    }
    const auto images = read_acquisition_csv(path);
    REQUIRE(images.size() == 3);
    CHECK(images[0].image_id == "wv_01");
    CHECK(images[1].snow);
    CHECK_FALSE(images[2].footprint_covers_area);
    CHECK(images[0].off_nadir == doctest::Approx(12.5));

    {
        std::ofstream out(path);
        out << "bad_row,400.0,12.5,160.0,42.0,2016-05-03,0,1\n"; // azimuth out of range
    }
    CHECK_THROWS_AS(read_acquisition_csv(path), InputError);

    {
        std::ofstream out(path);
        out << "only,three,fields\n";
    }
    CHECK_THROWS_AS(read_acquisition_csv(path), ParseError);
}
