#pragma once
#include <cmath>

namespace bpm {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(dot(*this)); }
};

// Unit quaternion (w, x, y, z), Hamilton convention.
struct Quat {
    double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

    static Quat about_z(double angle) {
        return {std::cos(0.5 * angle), 0.0, 0.0, std::sin(0.5 * angle)};
    }
    static Quat about_y(double angle) {
        return {std::cos(0.5 * angle), 0.0, std::sin(0.5 * angle), 0.0};
    }
    static Quat about_x(double angle) {
        return {std::cos(0.5 * angle), std::sin(0.5 * angle), 0.0, 0.0};
    }

    Quat operator*(const Quat& q) const {
        return {w * q.w - x * q.x - y * q.y - z * q.z,
                w * q.x + x * q.w + y * q.z - z * q.y,
                w * q.y - x * q.z + y * q.w + z * q.x,
                w * q.z + x * q.y - y * q.x + z * q.w};
    }

    double dot(const Quat& q) const { return w * q.w + x * q.x + y * q.y + z * q.z; }
    double norm() const { return std::sqrt(dot(*this)); }

    Quat normalized() const {
        double n = norm();
        return {w / n, x / n, y / n, z / n};
    }

    Quat conjugate() const { return {w, -x, -y, -z}; }

    // q v q* for unit q
    Vec3 rotate(const Vec3& v) const {
        // t = 2 q_vec x v; v' = v + w t + q_vec x t
        double tx = 2.0 * (y * v.z - z * v.y);
        double ty = 2.0 * (z * v.x - x * v.z);
        double tz = 2.0 * (x * v.y - y * v.x);
        return {v.x + w * tx + y * tz - z * ty,
                v.y + w * ty + z * tx - x * tz,
                v.z + w * tz + x * ty - y * tx};
    }
};

// Geodesic angle between two unit quaternions, sign-insensitive (q and -q are
// the same rotation): 2 acos(|<q1,q2>|), in [0, pi].
inline double quat_angle(const Quat& a, const Quat& b) {
    double d = std::fabs(a.dot(b));
    if (d > 1.0) d = 1.0;
    return 2.0 * std::acos(d);
}

}  // namespace bpm
