#include <doctest.h>

#include <filesystem>
#include <set>

#include "support.hpp"
#include "workbench/robot_model.hpp"

using namespace workbench;
using namespace workbench::robot;

TEST_CASE("default model has 17 joints with unique ids and sane limits") {
    const auto m = default_model();
    CHECK(m.joints().size() == kDof);
    std::set<int> ids;
    for (const auto& j : m.joints()) {
        ids.insert(j.id);
        CHECK(j.min_angle < j.max_angle);
        CHECK(j.max_speed > 0);
        CHECK(j.axis.norm() == doctest::Approx(1.0));
    }
    CHECK(ids.size() == kDof);
    CHECK(m.chains().count("arm_left"));
    CHECK(m.chains().count("arm_right"));
    CHECK(m.chains().count("head"));
    for (double a : m.home_angles()) CHECK(a == 0.0);
}

TEST_CASE("model construction rejects broken specs") {
    auto joints = default_model().joints();
    auto chains = default_model().chains();

    SUBCASE("duplicate id") {
        auto bad = joints;
        bad[3].id = bad[2].id;
        CHECK_THROWS_AS(RobotModel("x", bad, chains), ValidationError);
    }
    SUBCASE("inverted limits") {
        auto bad = joints;
        std::swap(bad[0].min_angle, bad[0].max_angle);
        CHECK_THROWS_AS(RobotModel("x", bad, chains), ValidationError);
    }
    SUBCASE("wrong joint count") {
        auto bad = joints;
        bad.pop_back();
        CHECK_THROWS_AS(RobotModel("x", bad, chains), ValidationError);
    }
    SUBCASE("chain names an unknown id") {
        auto bad = chains;
        bad["arm_left"].joint_ids.push_back(200);
        CHECK_THROWS_AS(RobotModel("x", joints, bad), ValidationError);
    }
    SUBCASE("non-unit axis") {
        auto bad = joints;
        bad[0].axis = Eigen::Vector3d(0, 0, 2);
        CHECK_THROWS_AS(RobotModel("x", bad, chains), ValidationError);
    }
}

TEST_CASE("model file round trip") {
    const auto m = default_model();
    const auto path = (std::filesystem::temp_directory_path() / "wb_model_rt.json").string();
    save_model(m, path);
    const auto back = load_model(path);
    REQUIRE(back.joints().size() == m.joints().size());
    for (std::size_t i = 0; i < kDof; ++i) {
        CHECK(back.joints()[i].name == m.joints()[i].name);
        CHECK(back.joints()[i].id == m.joints()[i].id);
        CHECK(back.joints()[i].min_angle == m.joints()[i].min_angle);
        CHECK(back.joints()[i].max_speed == m.joints()[i].max_speed);
        CHECK(back.joints()[i].offset.isApprox(m.joints()[i].offset));
    }
    CHECK(back.chains().size() == m.chains().size());
    CHECK_THROWS(load_model("/nonexistent/model.json"));
}

TEST_CASE("2-link planar forward kinematics matches the closed form") {
    testing::Gen gen(7);
    const auto chain = testing::planar_chain(0.3, 0.2);
    for (int n = 0; n < 200; ++n) {
        const double q1 = gen.uniform(-3.0, 3.0), q2 = gen.uniform(0.0, 3.0);
        const std::vector<double> q{q1, q2};
        const auto pose = forward_kinematics(chain, q);
        const auto ref = testing::planar_fk(0.3, 0.2, q1, q2);
        CHECK(pose.position.x() == doctest::Approx(ref.x()).epsilon(1e-12));
        CHECK(pose.position.y() == doctest::Approx(ref.y()).epsilon(1e-12));
        CHECK(std::abs(pose.position.z()) < 1e-12);
    }
}

TEST_CASE("arm forward kinematics matches a Rodrigues-formula reference") {
    testing::Gen gen(11);
    const auto m = default_model();
    for (const auto& name : {"arm_left", "arm_right", "head"}) {
        const auto chain = m.chain(name);
        for (int n = 0; n < 50; ++n) {
            std::vector<double> q;
            for (const auto& j : chain.joints) q.push_back(gen.uniform(j.min_angle, j.max_angle));
            const auto pose = forward_kinematics(chain, q);
            CHECK((pose.position - testing::chain_tip_reference(chain, q)).norm() < 1e-12);
            const auto links = link_poses(chain, q);
            CHECK((links.back().position - pose.position).norm() < 1e-15);
        }
    }
}

TEST_CASE("forward kinematics rejects out-of-limit angles and wrong arity") {
    const auto chain = testing::planar_chain();
    const std::vector<double> bad{0.0, -0.5};
    CHECK_THROWS_AS(forward_kinematics(chain, bad), ValidationError);
    const std::vector<double> short_q{0.0};
    CHECK_THROWS_AS(forward_kinematics(chain, short_q), ValidationError);
}

TEST_CASE("reach bounds the tip distance") {
    testing::Gen gen(3);
    const auto m = default_model();
    const auto chain = m.chain("arm_right");
    for (int n = 0; n < 100; ++n) {
        std::vector<double> q;
        for (const auto& j : chain.joints) q.push_back(gen.uniform(j.min_angle, j.max_angle));
        CHECK((forward_kinematics(chain, q).position - chain.origin).norm() <= chain.reach() + 1e-12);
    }
}

TEST_CASE("servo step follows the exact first-order lag") {
    auto spec = default_model().joints()[0];
    ServoState s{0.0, 0.1, true, 0.0};
    const double dt = 0.01;
    const auto next = step_servo(spec, s, dt);
    // small error: the speed limit does not bind
    CHECK(next.position == doctest::Approx(0.1 * (1 - std::exp(-kServoRate * dt))).epsilon(1e-12));
    CHECK(next.current_estimate == doctest::Approx(kCurrentPerRad * std::abs(0.1 - next.position)));
}

TEST_CASE("servo step respects speed limit, joint limits and stall current") {
    auto spec = default_model().joints()[0];
    ServoState s{0.0, spec.max_angle, true, 0.0};
    const double dt = 0.1;
    const auto next = step_servo(spec, s, dt);
    CHECK(next.position == doctest::Approx(spec.max_speed * dt));

    ServoState far{spec.min_angle, spec.max_angle + 5.0, true, 0.0};
    for (int i = 0; i < 500; ++i) far = step_servo(spec, far, 0.05);
    CHECK(far.position <= spec.max_angle);
    CHECK(far.current_estimate <= spec.stall_current);
}

TEST_CASE("servo with torque off does not move and draws no current") {
    auto spec = default_model().joints()[4];
    ServoState s{0.3, -0.5, false, 1.0};
    const auto next = step_servo(spec, s, 0.05);
    CHECK(next.position == 0.3);
    CHECK(next.current_estimate == 0.0);
}

TEST_CASE("rpm conversion") {
    CHECK(rpm_to_rad_per_sec(60.0) == doctest::Approx(2 * std::numbers::pi));
}
