#include "selfaffine/expansion_io.hpp"

#include <cstring>
#include <fstream>

#include <fmt/format.h>

#include "selfaffine/binary_io.hpp"

namespace selfaffine {

namespace {

using binio::get;
using binio::put;

constexpr char kMagic[8] = {'S', 'A', 'E', 'X', 'P', 'S', 'E', 'T'};
constexpr std::uint32_t kVersion = 1;

void header_mismatch(const char* what) {
    throw Error(ErrorCode::Io, fmt::format("expansion set file does not match the system ({})", what));
}

}  // namespace

void write_expansion_set(std::ostream& os, const ExpandingSystem& sys, const ExpansionSet& e) {
    const int n = sys.dim();
    os.write(kMagic, 8);
    put<std::uint32_t>(os, kVersion);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(n));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(e.depth));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(sys.digit_count()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(sys.mode()));
    put<double>(os, e.tau);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) put<double>(os, sys.matrix().entries()(r, c));
    for (const Vec& d : sys.digits())
        for (int a = 0; a < n; ++a) put<double>(os, d[a]);
    put<std::uint8_t>(os, e.exact ? 1 : 0);
    put<std::int64_t>(os, e.denominator);
    put<std::uint8_t>(os, e.collision ? 1 : 0);
    if (e.collision) {
        put<std::uint32_t>(os, static_cast<std::uint32_t>(e.collision->depth));
        put<std::uint64_t>(os, e.collision->code_a);
        put<std::uint64_t>(os, e.collision->code_b);
    }
    put<std::uint64_t>(os, e.size());
    for (std::size_t i = 0; i < e.size(); ++i) {
        for (int a = 0; a < n; ++a) put<double>(os, e.points.coords[i * n + a]);
        put<std::uint64_t>(os, e.multiplicity[i]);
        put<std::uint64_t>(os, e.word_code[i]);
        if (e.exact)
            for (int a = 0; a < n; ++a) put<std::int64_t>(os, e.keys[i * n + a]);
    }
    if (!os) throw Error(ErrorCode::Io, "failed writing expansion set file");
}

ExpansionSet read_expansion_set(std::istream& is, const ExpandingSystem& sys) {
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw Error(ErrorCode::Io, "not an expansion set file");
    if (get<std::uint32_t>(is) != kVersion) throw Error(ErrorCode::Io, "unsupported expansion set file version");
    const int n = sys.dim();
    if (static_cast<int>(get<std::uint32_t>(is)) != n) header_mismatch("dimension");
    ExpansionSet e;
    e.n = n;
    e.depth = static_cast<int>(get<std::uint32_t>(is));
    e.digit_count = get<std::uint32_t>(is);
    if (e.digit_count != sys.digit_count()) header_mismatch("digit count");
    if (get<std::uint32_t>(is) != static_cast<std::uint32_t>(sys.mode())) header_mismatch("mode");
    e.tau = get<double>(is);
    if (e.tau != sys.tau()) header_mismatch("tau");
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
            if (get<double>(is) != sys.matrix().entries()(r, c)) header_mismatch("matrix");
    for (const Vec& d : sys.digits())
        for (int a = 0; a < n; ++a)
            if (get<double>(is) != d[a]) header_mismatch("digits");
    e.exact = get<std::uint8_t>(is) != 0;
    e.denominator = get<std::int64_t>(is);
    if (get<std::uint8_t>(is) != 0) {
        ExpansionSet::Coincidence c;
        c.depth = static_cast<int>(get<std::uint32_t>(is));
        c.code_a = get<std::uint64_t>(is);
        c.code_b = get<std::uint64_t>(is);
        e.collision = c;
    }
    const auto count = get<std::uint64_t>(is);
    e.points.n = n;
    e.points.coords.resize(count * n);
    e.points.weights.resize(count);
    e.multiplicity.resize(count);
    e.word_code.resize(count);
    if (e.exact) e.keys.resize(count * n);
    for (std::size_t i = 0; i < count; ++i) {
        for (int a = 0; a < n; ++a) e.points.coords[i * n + a] = get<double>(is);
        e.multiplicity[i] = get<std::uint64_t>(is);
        e.points.weights[i] = static_cast<double>(e.multiplicity[i]);
        e.word_code[i] = get<std::uint64_t>(is);
        if (e.exact)
            for (int a = 0; a < n; ++a) e.keys[i * n + a] = get<std::int64_t>(is);
    }
    return e;
}

void save_expansion_set(const std::string& path, const ExpandingSystem& sys, const ExpansionSet& e) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error(ErrorCode::Io, fmt::format("cannot write {}", path));
    write_expansion_set(os, sys, e);
}

ExpansionSet load_expansion_set(const std::string& path, const ExpandingSystem& sys) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error(ErrorCode::Io, fmt::format("cannot open {}", path));
    return read_expansion_set(is, sys);
}

}  // namespace selfaffine
