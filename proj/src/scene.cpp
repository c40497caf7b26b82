#include "qdgrasp/scene.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "qdgrasp/errors.hpp"

namespace qdgrasp {

    namespace {
        bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }
    } // namespace

    void validate(const PolygonObject& object)
    {
        if (!is_strictly_convex_ccw<double>(object.vertices))
            throw DomainError("object polygon must be strictly convex, counter-clockwise, with at least 3 vertices");
        if (!(object.mass > 0.0))
            throw DomainError("object mass must be positive");
        if (!in_unit(object.mu) || !in_unit(object.zeta_s) || !in_unit(object.zeta_r))
            throw DomainError("friction coefficients must lie in [0, 1]");
        if (!contains_strictly<double>(object.vertices, local_com(object)))
            throw DomainError("center of mass must lie strictly inside the polygon");
    }

    void validate(const PlanarArm& arm)
    {
        const auto j = arm.link_lengths.size();
        if (j == 0)
            throw DomainError("arm needs at least one link");
        if (arm.joint_min.size() != j || arm.joint_max.size() != j)
            throw DimensionError("joint limits must have one entry per link");
        if ((arm.link_lengths.array() <= 0.0).any())
            throw DomainError("link lengths must be positive");
        if ((arm.joint_min.array() >= arm.joint_max.array()).any())
            throw DomainError("joint limits need min < max");
        if (!(arm.finger_length > 0.0) || !(arm.max_aperture > 0.0))
            throw DomainError("finger length and aperture must be positive");
    }

    void validate(const SceneConfig& scene)
    {
        validate(scene.object);
        validate(scene.arm);
        if (scene.episode_steps < 2)
            throw DomainError("episode needs at least 2 steps");
        if (!(scene.lift_height > 0.0))
            throw DomainError("lift height must be positive");
        if (!(scene.gravity >= 0.0))
            throw DomainError("gravity must be non-negative");
        if (!(scene.sim.force_budget > 0.0) || !(scene.sim.contact_tolerance > 0.0))
            throw DomainError("force budget and contact tolerance must be positive");
    }

    Polygon world_vertices(const PolygonObject& object, const Pose2& pose)
    {
        return (rotation2(pose.theta) * object.vertices).colwise() + Vec2(pose.x, pose.y);
    }

    Vec2 local_com(const PolygonObject& object) { return polygon_centroid<double>(object.vertices) + object.com_offset; }

    Vec2 world_com(const PolygonObject& object, const Pose2& pose) { return rotation2(pose.theta) * local_com(object) + Vec2(pose.x, pose.y); }

    double characteristic_length(const PolygonObject& object)
    {
        return (object.vertices.colwise() - local_com(object)).colwise().norm().maxCoeff();
    }

    GripperState gripper_state(const PlanarArm& arm, const Eigen::Ref<const Eigen::VectorXd>& joints, double aperture)
    {
        GripperState g;
        Vec2 p(arm.base.x, arm.base.y);
        double phi = arm.base.theta;
        for (Eigen::Index i = 0; i < arm.link_lengths.size(); ++i) {
            phi += joints[i];
            p += arm.link_lengths[i] * Vec2(std::cos(phi), std::sin(phi));
        }
        g.position = p;
        g.orientation = phi;
        g.aperture = aperture;

        const Vec2 a = g.approach_axis(), c = g.closing_axis();
        const Vec2 left = p + 0.5 * aperture * c, right = p - 0.5 * aperture * c;
        g.fingers[0] = {left, left + arm.finger_length * a};
        g.fingers[1] = {right, right + arm.finger_length * a};
        return g;
    }

    GripperState forward_kinematics(const PlanarArm& arm, const Eigen::Ref<const Eigen::VectorXd>& joints, std::optional<double> aperture)
    {
        if (joints.size() != arm.link_lengths.size())
            throw DimensionError("joint vector has " + std::to_string(joints.size()) + " entries, arm has " + std::to_string(arm.link_lengths.size()) + " joints");
        if ((joints.array() < arm.joint_min.array()).any() || (joints.array() > arm.joint_max.array()).any())
            throw DomainError("joint configuration outside limits");
        const double ap = aperture.value_or(arm.max_aperture);
        if (ap < 0.0 || ap > arm.max_aperture)
            throw DomainError("aperture outside [0, max_aperture]");
        return gripper_state(arm, joints, ap);
    }

    int close_step_for(double fraction, int steps)
    {
        const int lo = (3 * steps) / 10;
        const int hi = (9 * steps) / 10;
        // floor(0.3T + c * 0.6T) with the 1/10 kept exact.
        const int k = static_cast<int>(std::floor((3.0 * steps + fraction * 6.0 * steps) / 10.0));
        return std::clamp(k, lo, std::min(hi, steps - 1));
    }

    Trajectory decode_genome(const Genome& genome, const SceneConfig& scene)
    {
        const PlanarArm& arm = scene.arm;
        const int j = arm.joints();
        const int steps = scene.episode_steps;
        if (genome.params.size() != genome_size(arm))
            throw DimensionError("genome length " + std::to_string(genome.params.size()) + " does not match 3*J+1 = " + std::to_string(genome_size(arm)));
        if ((genome.params.array() < 0.0).any() || (genome.params.array() > 1.0).any() || !genome.params.allFinite())
            throw DomainError("genome components must lie in [0, 1]");

        const Eigen::ArrayXd span = arm.joint_max - arm.joint_min;
        Eigen::MatrixXd wp(j, 3);
        for (int w = 0; w < 3; ++w)
            wp.col(w) = (arm.joint_min.array() + genome.params.segment(w * j, j).array() * span).matrix();

        Trajectory traj;
        traj.waypoints.resize(j, steps);
        const int mid = steps / 2;
        for (int k = 0; k < steps; ++k) {
            if (k == steps - 1) {
                traj.waypoints.col(k) = wp.col(2);
            }
            else if (k <= mid) {
                const double alpha = static_cast<double>(k) / mid;
                traj.waypoints.col(k) = (1.0 - alpha) * wp.col(0) + alpha * wp.col(1);
            }
            else {
                const double alpha = static_cast<double>(k - mid) / (steps - 1 - mid);
                traj.waypoints.col(k) = (1.0 - alpha) * wp.col(1) + alpha * wp.col(2);
            }
        }
        // Interpolation rounding can leave a limit by an ulp.
        traj.waypoints = traj.waypoints.cwiseMax(arm.joint_min.replicate(1, steps)).cwiseMin(arm.joint_max.replicate(1, steps));
        traj.commands = traj.waypoints.rightCols(steps - 1) - traj.waypoints.leftCols(steps - 1);
        traj.close_step = close_step_for(genome.params[3 * j], steps);
        return traj;
    }

    namespace {

        PlanarArm desk_arm()
        {
            PlanarArm arm;
            arm.base = {-0.30, 0.25, 0.0};
            arm.link_lengths = Eigen::Vector3d(0.22, 0.18, 0.10);
            arm.joint_min = Eigen::Vector3d(-1.8, -2.4, -2.4);
            arm.joint_max = Eigen::Vector3d(0.6, 0.4, 2.4);
            arm.finger_length = 0.05;
            arm.max_aperture = 0.12;
            return arm;
        }

        Polygon rectangle(double w, double h)
        {
            Polygon p(2, 4);
            p << -w / 2, w / 2, w / 2, -w / 2, //
                -h / 2, -h / 2, h / 2, h / 2;
            return p;
        }

        Polygon regular(int n, double circumradius, double phase)
        {
            Polygon p(2, n);
            for (int i = 0; i < n; ++i) {
                const double a = phase + 2.0 * std::numbers::pi * i / n;
                p.col(i) = circumradius * Vec2(std::cos(a), std::sin(a));
            }
            return p;
        }

    } // namespace

    void seat_object(SceneConfig& scene)
    {
        scene.object.pose.y = 0.0;
        const double low = world_vertices(scene.object, scene.object.pose).row(1).minCoeff();
        scene.object.pose.y = scene.table_height - low;
    }

    std::vector<std::string> builtin_scene_names() { return {"square", "hexagon", "bar"}; }

    SceneConfig builtin_scene(std::string_view name)
    {
        SceneConfig scene;
        scene.name = std::string(name);
        scene.arm = desk_arm();
        scene.object.pose = {0.0, 0.0, 0.0};
        if (name == "square") {
            scene.object.vertices = rectangle(0.06, 0.06);
            scene.object.mass = 0.2;
        }
        else if (name == "hexagon") {
            // Flat face down.
            scene.object.vertices = regular(6, 0.05, 0.0);
            scene.object.mass = 0.25;
        }
        else if (name == "bar") {
            scene.object.vertices = rectangle(0.10, 0.02);
            scene.object.mass = 0.15;
        }
        else {
            throw ConfigError("unknown built-in scene '" + std::string(name) + "'");
        }
        seat_object(scene);
        validate(scene);
        return scene;
    }

    namespace {
        using nlohmann::json;

        json pose_json(const Pose2& p) { return json{{"x", p.x}, {"y", p.y}, {"theta", p.theta}}; }

        Pose2 pose_from(const json& j) { return {j.at("x").get<double>(), j.at("y").get<double>(), j.value("theta", 0.0)}; }

        json vec_json(const Eigen::VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

        Eigen::VectorXd vec_from(const json& j)
        {
            const auto v = j.get<std::vector<double>>();
            return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
        }
    } // namespace

    std::string scene_to_json(const SceneConfig& s)
    {
        json verts = json::array();
        for (Eigen::Index i = 0; i < s.object.vertices.cols(); ++i)
            verts.push_back({s.object.vertices(0, i), s.object.vertices(1, i)});
        json limits = json::array();
        for (Eigen::Index i = 0; i < s.arm.joint_min.size(); ++i)
            limits.push_back({s.arm.joint_min[i], s.arm.joint_max[i]});

        const json doc{
            {"name", s.name},
            {"object",
                {{"vertices", verts}, {"com_offset", {s.object.com_offset.x(), s.object.com_offset.y()}}, {"mass", s.object.mass}, {"pose", pose_json(s.object.pose)},
                    {"mu", s.object.mu}, {"zeta_s", s.object.zeta_s}, {"zeta_r", s.object.zeta_r}}},
            {"arm",
                {{"base", pose_json(s.arm.base)}, {"link_lengths", vec_json(s.arm.link_lengths)}, {"joint_limits", limits}, {"finger_length", s.arm.finger_length},
                    {"max_aperture", s.arm.max_aperture}}},
            {"table_height", s.table_height},
            {"gravity", s.gravity},
            {"episode_steps", s.episode_steps},
            {"lift_height", s.lift_height},
            {"sim",
                {{"contact_tolerance", s.sim.contact_tolerance}, {"epsilon_min", s.sim.epsilon_min}, {"force_budget", s.sim.force_budget},
                    {"shake_force_factor", s.sim.shake_force_factor}, {"shake_torque_factor", s.sim.shake_torque_factor},
                    {"knock_away_distance", s.sim.knock_away_distance}, {"rolling_scale", s.sim.rolling_scale}, {"close_increment", s.sim.close_increment}}},
        };
        return doc.dump(2);
    }

    SceneConfig scene_from_json(const std::string& text)
    {
        SceneConfig s;
        try {
            const json doc = json::parse(text);
            s.name = doc.value("name", std::string("custom"));

            const json& obj = doc.at("object");
            const auto& verts = obj.at("vertices");
            s.object.vertices.resize(2, static_cast<Eigen::Index>(verts.size()));
            for (std::size_t i = 0; i < verts.size(); ++i) {
                s.object.vertices(0, static_cast<Eigen::Index>(i)) = verts[i].at(0).get<double>();
                s.object.vertices(1, static_cast<Eigen::Index>(i)) = verts[i].at(1).get<double>();
            }
            if (obj.contains("com_offset"))
                s.object.com_offset = Vec2(obj["com_offset"].at(0).get<double>(), obj["com_offset"].at(1).get<double>());
            s.object.mass = obj.at("mass").get<double>();
            if (obj.contains("pose"))
                s.object.pose = pose_from(obj["pose"]);
            s.object.mu = obj.value("mu", s.object.mu);
            s.object.zeta_s = obj.value("zeta_s", s.object.zeta_s);
            s.object.zeta_r = obj.value("zeta_r", s.object.zeta_r);

            const json& arm = doc.at("arm");
            s.arm.base = pose_from(arm.at("base"));
            s.arm.link_lengths = vec_from(arm.at("link_lengths"));
            const auto& limits = arm.at("joint_limits");
            s.arm.joint_min.resize(static_cast<Eigen::Index>(limits.size()));
            s.arm.joint_max.resize(static_cast<Eigen::Index>(limits.size()));
            for (std::size_t i = 0; i < limits.size(); ++i) {
                s.arm.joint_min[static_cast<Eigen::Index>(i)] = limits[i].at(0).get<double>();
                s.arm.joint_max[static_cast<Eigen::Index>(i)] = limits[i].at(1).get<double>();
            }
            s.arm.finger_length = arm.at("finger_length").get<double>();
            s.arm.max_aperture = arm.at("max_aperture").get<double>();

            s.table_height = doc.value("table_height", s.table_height);
            s.gravity = doc.value("gravity", s.gravity);
            s.episode_steps = doc.value("episode_steps", s.episode_steps);
            s.lift_height = doc.value("lift_height", s.lift_height);
            if (doc.contains("sim")) {
                const json& sim = doc["sim"];
                s.sim.contact_tolerance = sim.value("contact_tolerance", s.sim.contact_tolerance);
                s.sim.epsilon_min = sim.value("epsilon_min", s.sim.epsilon_min);
                s.sim.force_budget = sim.value("force_budget", s.sim.force_budget);
                s.sim.shake_force_factor = sim.value("shake_force_factor", s.sim.shake_force_factor);
                s.sim.shake_torque_factor = sim.value("shake_torque_factor", s.sim.shake_torque_factor);
                s.sim.knock_away_distance = sim.value("knock_away_distance", s.sim.knock_away_distance);
                s.sim.rolling_scale = sim.value("rolling_scale", s.sim.rolling_scale);
                s.sim.close_increment = sim.value("close_increment", s.sim.close_increment);
            }
        }
        catch (const json::exception& e) {
            throw ConfigError(std::string("invalid scene document: ") + e.what());
        }
        validate(s);
        return s;
    }

    SceneConfig load_scene(const std::string& name_or_path)
    {
        for (const auto& n : builtin_scene_names())
            if (n == name_or_path)
                return builtin_scene(n);
        std::ifstream in(name_or_path);
        if (!in)
            throw ConfigError("scene '" + name_or_path + "' is neither a built-in scene nor a readable file");
        std::stringstream buf;
        buf << in.rdbuf();
        return scene_from_json(buf.str());
    }

} // namespace qdgrasp
