#include "tednet/params_io.hpp"

#include <utility>
#include <vector>

#include "tednet/binio.hpp"

namespace tednet {

namespace {
constexpr char kMagic[4] = {'T', 'D', 'N', 'W'};
constexpr std::uint16_t kVersion = 1;

struct Entry {
    std::string name;
    Shape shape;
    std::uint64_t offset = 0;
    std::uint64_t bytes = 0;
};
}  // namespace

void save_params(const std::string& path, const TedNetParams<float>& params) {
    std::vector<std::pair<std::string, const Tensor*>> order;
    params.visit([&order](const std::string& name, const Tensor& t) {
        order.emplace_back(name, &t);
    });

    std::vector<std::uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    binio::put_u16(out, kVersion);
    binio::put_u32(out, static_cast<std::uint32_t>(order.size()));
    std::uint64_t offset = 0;
    for (const auto& [name, t] : order) {
        binio::put_u16(out, static_cast<std::uint16_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        binio::put_u8(out, static_cast<std::uint8_t>(t->rank()));
        for (std::size_t i = 0; i < t->rank(); ++i)
            binio::put_u32(out, static_cast<std::uint32_t>(t->dim(i)));
        binio::put_u64(out, offset);
        const std::uint64_t nbytes = static_cast<std::uint64_t>(t->size()) * 4;
        binio::put_u64(out, nbytes);
        offset += nbytes;
    }
    for (const auto& [name, t] : order)
        for (std::size_t i = 0; i < t->size(); ++i) binio::put_f32(out, (*t)[i]);
    binio::write_file(path, out);
}

TedNetParams<float> load_params(const std::string& path, const ModelConfig& cfg) {
    const std::vector<std::uint8_t> buf = binio::read_file(path);
    binio::Reader r(buf);
    if (r.str(4) != std::string(kMagic, 4))
        throw FormatError(path + ": bad magic, not a parameter file");
    const std::uint16_t version = r.u16();
    if (version != kVersion)
        throw FormatError(path + ": unsupported format version " + std::to_string(version));
    const std::uint32_t count = r.u32();

    std::vector<Entry> manifest(count);
    for (Entry& e : manifest) {
        e.name = r.str(r.u16());
        const std::uint8_t rank = r.u8();
        e.shape.resize(rank);
        for (std::uint8_t i = 0; i < rank; ++i) e.shape[i] = r.u32();
        e.offset = r.u64();
        e.bytes = r.u64();
        if (e.bytes != shape_numel(e.shape) * 4)
            throw FormatError(path + ": tensor " + e.name + " payload size " +
                              std::to_string(e.bytes) + " does not match shape " +
                              shape_str(e.shape));
    }
    const std::size_t payload_start = r.offset();

    TedNetParams<float> params = zero_params<float>(cfg);
    std::size_t idx = 0;
    params.visit([&](const std::string& name, Tensor& t) {
        if (idx >= manifest.size())
            throw ShapeError(path + ": tensor " + name + " missing from file (config expects " +
                             shape_str(t.shape()) + ")");
        const Entry& e = manifest[idx++];
        if (e.name != name || e.shape != t.shape())
            throw ShapeError(path + ": tensor mismatch at " + e.name + " " + shape_str(e.shape) +
                             ", config expects " + name + " " + shape_str(t.shape()));
        binio::Reader pr(buf);
        pr.skip(payload_start + static_cast<std::size_t>(e.offset));
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = pr.f32();
    });
    if (idx != manifest.size())
        throw ShapeError(path + ": file holds " + std::to_string(manifest.size()) +
                         " tensors, config expects " + std::to_string(idx));
    return params;
}

}  // namespace tednet
