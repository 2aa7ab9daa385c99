// Copyright (c) 2026 the relight authors.
// The relight source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#ifndef RELIGHT_VEC_HPP
#define RELIGHT_VEC_HPP

#include <array>
#include <cmath>

namespace relight {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  constexpr Vec3() = default;
  constexpr Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
  Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }

  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
};

constexpr Vec3 operator*(double s, const Vec3& v) { return v * s; }

constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

constexpr Vec3 mul(const Vec3& a, const Vec3& b) { return {a.x * b.x, a.y * b.y, a.z * b.z}; }

inline double length(const Vec3& v) { return std::sqrt(dot(v, v)); }

inline Vec3 normalized(const Vec3& v) {
  double n = length(v);
  return n > 0.0 ? v / n : Vec3{0.0, 0.0, 0.0};
}

// Mirror reflection of a direction about a unit normal.
constexpr Vec3 reflect(const Vec3& d, const Vec3& n) { return 2.0 * dot(n, d) * n - d; }

// Row-major 3x3 matrix; enough linear algebra for photometric stereo normal
// equations and ellipsoid frames.
struct Mat3 {
  std::array<double, 9> m{};

  static Mat3 identity() {
    Mat3 r;
    r.m = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    return r;
  }

  double operator()(int r, int c) const { return m[r * 3 + c]; }
  double& operator()(int r, int c) { return m[r * 3 + c]; }

  Vec3 operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }

  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0;
        for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
        r(i, j) = s;
      }
    return r;
  }

  Mat3 transposed() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
    return r;
  }
};

// Intrinsic rotations about x, then y, then z.
inline Mat3 rotation_xyz(double ax, double ay, double az) {
  const double cx = std::cos(ax), sx = std::sin(ax);
  const double cy = std::cos(ay), sy = std::sin(ay);
  const double cz = std::cos(az), sz = std::sin(az);
  Mat3 rx = Mat3::identity(), ry = Mat3::identity(), rz = Mat3::identity();
  rx(1, 1) = cx; rx(1, 2) = -sx; rx(2, 1) = sx; rx(2, 2) = cx;
  ry(0, 0) = cy; ry(0, 2) = sy; ry(2, 0) = -sy; ry(2, 2) = cy;
  rz(0, 0) = cz; rz(0, 1) = -sz; rz(1, 0) = sz; rz(1, 1) = cz;
  return rz * ry * rx;
}

inline double determinant(const Mat3& a) {
  return a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
         a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
         a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
}

// Cramer solve; caller guards conditioning.
inline Vec3 solve3x3(const Mat3& a, const Vec3& b) {
  const double det = determinant(a);
  if (det == 0.0) return {0, 0, 0};
  Mat3 ax = a, ay = a, az = a;
  for (int r = 0; r < 3; ++r) {
    ax(r, 0) = b[r];
    ay(r, 1) = b[r];
    az(r, 2) = b[r];
  }
  return {determinant(ax) / det, determinant(ay) / det, determinant(az) / det};
}

// Eigenvalues of a symmetric 3x3 matrix, ascending (trigonometric method).
inline std::array<double, 3> sym_eigenvalues(const Mat3& a) {
  const double p1 = a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2);
  const double q = (a(0, 0) + a(1, 1) + a(2, 2)) / 3.0;
  if (p1 == 0.0) {
    std::array<double, 3> ev = {a(0, 0), a(1, 1), a(2, 2)};
    if (ev[0] > ev[1]) std::swap(ev[0], ev[1]);
    if (ev[1] > ev[2]) std::swap(ev[1], ev[2]);
    if (ev[0] > ev[1]) std::swap(ev[0], ev[1]);
    return ev;
  }
  const double p2 = (a(0, 0) - q) * (a(0, 0) - q) + (a(1, 1) - q) * (a(1, 1) - q) +
                    (a(2, 2) - q) * (a(2, 2) - q) + 2.0 * p1;
  const double p = std::sqrt(p2 / 6.0);
  Mat3 bm;
  for (int i = 0; i < 9; ++i) bm.m[i] = a.m[i];
  bm(0, 0) -= q; bm(1, 1) -= q; bm(2, 2) -= q;
  for (int i = 0; i < 9; ++i) bm.m[i] /= p;
  double r = determinant(bm) / 2.0;
  r = std::fmax(-1.0, std::fmin(1.0, r));
  const double phi = std::acos(r) / 3.0;
  const double e2 = q + 2.0 * p * std::cos(phi);
  const double e0 = q + 2.0 * p * std::cos(phi + 2.0 * M_PI / 3.0);
  const double e1 = 3.0 * q - e0 - e2;
  return {e0, e1, e2};
}

}  // namespace relight

#endif  // RELIGHT_VEC_HPP
