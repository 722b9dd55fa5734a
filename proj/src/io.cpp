#include "gustdock/io.hpp"

#include <bit>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace gustdock {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_vec(const Vec3& v) {
    return fmt_double(v.x()) + ',' + fmt_double(v.y()) + ',' + fmt_double(v.z());
}

double parse_double(const std::string& s) {
    const char* begin = s.c_str();
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(begin, &end);
    while (end && (*end == ' ' || *end == '\r' || *end == '\t')) ++end;
    if (end == begin || (end && *end != '\0') || errno == ERANGE) {
        throw std::runtime_error("not a number: '" + s + "'");
    }
    return v;
}

std::vector<double> split_doubles(const std::string& line) {
    std::vector<double> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(parse_double(field));
    return out;
}

Vec3 parse_vec(const std::string& s) {
    const auto f = split_doubles(s);
    if (f.size() != 3) throw std::runtime_error("expected 3 components: '" + s + "'");
    return {f[0], f[1], f[2]};
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

namespace {
template <class T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <class T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw std::runtime_error("unexpected end of binary stream");
    return v;
}
}  // namespace

void write_u64(std::ostream& out, std::uint64_t v) { put(out, v); }
void write_f64(std::ostream& out, double v) { put(out, v); }
void write_f32(std::ostream& out, float v) { put(out, v); }
std::uint64_t read_u64(std::istream& in) { return get<std::uint64_t>(in); }
double read_f64(std::istream& in) { return get<double>(in); }
float read_f32(std::istream& in) { return get<float>(in); }

}  // namespace gustdock
