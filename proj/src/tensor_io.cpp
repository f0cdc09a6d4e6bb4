#include "nextview/tensor_io.hpp"

#include <cstring>
#include <fstream>

#include "nextview/errors.hpp"

namespace nextview {

namespace {
constexpr char kMagic[4] = {'N', 'V', 'T', '1'};
}

void save_tensor(const std::string& path, const Tensor& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("save_tensor: cannot open " + path);
    out.write(kMagic, 4);
    const std::uint32_t rank = static_cast<std::uint32_t>(t.dims.size());
    out.write(reinterpret_cast<const char*>(&rank), sizeof(rank));
    for (int d : t.dims) {
        const std::int64_t v = d;
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!out) throw DataError("save_tensor: write failed: " + path);
}

Tensor load_tensor(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("load_tensor: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("load_tensor: bad magic in " + path);
    std::uint32_t rank = 0;
    in.read(reinterpret_cast<char*>(&rank), sizeof(rank));
    if (!in || rank > 8) throw DataError("load_tensor: bad rank in " + path);
    std::vector<int> dims(rank);
    for (auto& d : dims) {
        std::int64_t v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        if (!in || v <= 0) throw DataError("load_tensor: bad dimension in " + path);
        d = static_cast<int>(v);
    }
    Tensor t(dims);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!in) throw DataError("load_tensor: truncated data in " + path);
    return t;
}

}  // namespace nextview
