#include "tednet/binio.hpp"

#include <cstdio>
#include <memory>

namespace tednet::binio {

namespace {
struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;
}  // namespace

std::vector<std::uint8_t> read_file(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw FormatError("cannot open " + path + " for reading");
    std::fseek(f.get(), 0, SEEK_END);
    const long size = std::ftell(f.get());
    if (size < 0) throw FormatError("cannot determine size of " + path);
    std::fseek(f.get(), 0, SEEK_SET);
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(size));
    if (!buf.empty() && std::fread(buf.data(), 1, buf.size(), f.get()) != buf.size())
        throw FormatError("short read from " + path);
    return buf;
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw FormatError("cannot open " + path + " for writing");
    if (!bytes.empty() && std::fwrite(bytes.data(), 1, bytes.size(), f.get()) != bytes.size())
        throw FormatError("short write to " + path);
}

}  // namespace tednet::binio
