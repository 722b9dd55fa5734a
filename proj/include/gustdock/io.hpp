#pragma once

#include "gustdock/world.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace gustdock {

/// Shortest-safe round-trip text for a double ("%.17g").
std::string fmt_double(double v);

/// "x,y,z" with fmt_double components.
std::string fmt_vec(const Vec3& v);

double parse_double(const std::string& s);

/// Parses "x,y,z".
Vec3 parse_vec(const std::string& s);

/// Splits a comma-separated line of numbers.
std::vector<double> split_doubles(const std::string& line);

/// SplitMix64 finaliser of (seed, index); used to derive per-item seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

// Little-endian binary helpers. The host is assumed little-endian; checked at
// compile time in io.cpp.
void write_u64(std::ostream& out, std::uint64_t v);
void write_f64(std::ostream& out, double v);
void write_f32(std::ostream& out, float v);
std::uint64_t read_u64(std::istream& in);
double read_f64(std::istream& in);
float read_f32(std::istream& in);

}  // namespace gustdock
