#include "mpo/snapshot.hpp"

#include <zlib.h>

#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>

#include "mpo/error.hpp"

namespace mpo {

namespace {

constexpr char kMagic[4] = {'M', 'P', 'O', '1'};

static_assert(std::endian::native == std::endian::little, "snapshot codec assumes a little-endian host");

template <class T>
void put(std::vector<std::uint8_t>& out, T v) {
    std::uint8_t b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    out.insert(out.end(), b, b + sizeof(T));
}

template <class T>
T get(const std::uint8_t* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return v;
}

std::uint32_t crc_of(const std::uint8_t* p, std::size_t n) {
    uLong c = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed large payloads in chunks.
    while (n > 0) {
        const uInt k = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
        c = crc32(c, p, k);
        p += k;
        n -= k;
    }
    return static_cast<std::uint32_t>(c);
}

}  // namespace

std::vector<std::uint8_t> encode_plane(const PlaneParams& plane) {
    plane.validate();
    const std::size_t n = plane.dim();
    std::vector<std::uint8_t> out(kMagic, kMagic + 4);
    out.reserve(4 + 8 + (3 * n + 1) * 8 + 4);
    put<std::uint64_t>(out, n);
    for (const Vec* v : {&plane.w_origin, &plane.w_up, &plane.phi_right})
        for (double x : *v) put(out, x);
    put(out, plane.scale);
    put(out, crc_of(out.data() + 4, out.size() - 4));
    return out;
}

PlaneParams decode_plane(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
    using K = SnapshotError::Kind;
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 3) != 0)
        throw SnapshotError(K::bad_magic, origin + ": not a plane snapshot");
    if (bytes[3] != kMagic[3]) {
        if (std::isdigit(bytes[3]))
            throw SnapshotError(K::version, origin + ": unsupported snapshot version " + std::string(1, bytes[3]));
        throw SnapshotError(K::bad_magic, origin + ": not a plane snapshot");
    }
    if (bytes.size() < 4 + 8 + 8 + 4) throw SnapshotError(K::length, origin + ": truncated header");
    const std::uint64_t n = get<std::uint64_t>(bytes.data() + 4);
    const std::uint64_t max_n = (bytes.size() - 24) / 24;
    if (n > max_n || bytes.size() != 4 + 8 + (3 * n + 1) * 8 + 4)
        throw SnapshotError(K::length, origin + ": size " + std::to_string(bytes.size()) +
                                           " does not match n = " + std::to_string(n));
    const std::size_t crc_at = bytes.size() - 4;
    if (crc_of(bytes.data() + 4, crc_at - 4) != get<std::uint32_t>(bytes.data() + crc_at))
        throw SnapshotError(K::crc, origin + ": checksum mismatch");
    PlaneParams p;
    const std::uint8_t* q = bytes.data() + 12;
    for (Vec* v : {&p.w_origin, &p.w_up, &p.phi_right}) {
        v->resize(n);
        for (auto& x : *v) {
            x = get<double>(q);
            q += 8;
        }
    }
    p.scale = get<double>(q);
    return p;
}

void save_plane(const PlaneParams& plane, const std::string& path) {
    const auto bytes = encode_plane(plane);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for '" + path + "'");
}

PlaneParams load_plane(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_plane(bytes, path);
}

}  // namespace mpo
