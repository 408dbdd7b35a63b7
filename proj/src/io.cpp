#include "point3d/io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "point3d/error.hpp"

namespace point3d {

namespace {

constexpr char kMagic[4] = {'P', 'T', 'K', '1'};

void put_u32_le(std::ostream& os, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64_le(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t get_u32_le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

uint64_t get_u64_le(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

} // namespace

void save_tensor(const std::string& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("save_tensor: cannot open " + path);
    os.write(kMagic, 4);
    put_u32_le(os, static_cast<uint32_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) put_u64_le(os, static_cast<uint64_t>(t.dim(i)));
    os.put(static_cast<char>(0)); // dtype 0 = f64
    for (int64_t i = 0; i < t.numel(); ++i) {
        uint64_t bits;
        double v = t[i];
        std::memcpy(&bits, &v, 8);
        put_u64_le(os, bits);
    }
    if (!os) throw DataError("save_tensor: write failed for " + path);
}

Tensor load_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("load_tensor: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) {
        throw DataError("load_tensor: bad magic in " + path + " (not a PTK1 file)");
    }
    uint32_t rank = get_u32_le(is);
    if (!is || rank == 0 || rank > 8) {
        throw DataError("load_tensor: unsupported rank in " + path);
    }
    std::vector<int> shape(rank);
    int64_t numel = 1;
    for (uint32_t i = 0; i < rank; ++i) {
        uint64_t d = get_u64_le(is);
        if (!is || d == 0 || d > (1ull << 31)) {
            throw DataError("load_tensor: invalid dimension in " + path);
        }
        shape[i] = static_cast<int>(d);
        numel *= static_cast<int64_t>(d);
    }
    int dtype = is.get();
    if (dtype != 0) throw DataError("load_tensor: unsupported dtype tag in " + path);
    std::vector<double> data(static_cast<size_t>(numel));
    for (int64_t i = 0; i < numel; ++i) {
        uint64_t bits = get_u64_le(is);
        if (!is) throw DataError("load_tensor: truncated payload in " + path);
        double v;
        std::memcpy(&v, &bits, 8);
        data[static_cast<size_t>(i)] = v;
    }
    return Tensor(std::move(shape), std::move(data));
}

} // namespace point3d
