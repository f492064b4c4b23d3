#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tolerantecg/error.hpp"
#include "tolerantecg/nn/param.hpp"

namespace tecg {

namespace detail {

inline std::uint32_t crc32(const void* data, size_t len, std::uint32_t crc = 0) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320U ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    crc = ~crc;
    const auto* p = static_cast<const std::uint8_t*>(data);
    for (size_t i = 0; i < len; ++i) crc = table[(crc ^ p[i]) & 0xFF] ^ (crc >> 8);
    return ~crc;
}

}  // namespace detail

// Named-tensor checkpoint directory: a JSON manifest (names, shapes,
// checksums) plus one raw little-endian float64 blob. Lossless round-trip is
// the contract; resume relies on it being bit-exact.
class TensorArchive {
public:
    void put(const std::string& name, const nn::Mat& value) { tensors_[name] = value; }

    void put_scalar(const std::string& name, double v) {
        nn::Mat m(1, 1);
        m(0, 0) = v;
        tensors_[name] = m;
    }

    bool has(const std::string& name) const { return tensors_.count(name) > 0; }

    const nn::Mat& get(const std::string& name) const {
        const auto it = tensors_.find(name);
        if (it == tensors_.end())
            fail(errc::config_mismatch, "checkpoint missing tensor: " + name);
        return it->second;
    }

    double get_scalar(const std::string& name) const { return get(name)(0, 0); }

    const std::map<std::string, nn::Mat>& tensors() const { return tensors_; }

    void save(const std::filesystem::path& dir, nlohmann::json extra = {}) const {
        std::filesystem::create_directories(dir);
        nlohmann::json manifest;
        manifest["format_version"] = 1;
        manifest["dtype"] = "f64le";
        manifest["extra"] = std::move(extra);
        manifest["tensors"] = nlohmann::json::array();
        std::ofstream blob(dir / "tensors.bin", std::ios::binary);
        if (!blob) fail(errc::missing_file, "cannot write checkpoint blob in " + dir.string());
        std::uint64_t offset = 0;
        for (const auto& [name, m] : tensors_) {
            const size_t bytes = sizeof(double) * static_cast<size_t>(m.size());
            const std::uint32_t crc = detail::crc32(m.data(), bytes);
            manifest["tensors"].push_back({{"name", name},
                                           {"rows", m.rows()},
                                           {"cols", m.cols()},
                                           {"offset", offset},
                                           {"crc32", crc}});
            blob.write(reinterpret_cast<const char*>(m.data()),
                       static_cast<std::streamsize>(bytes));
            offset += bytes;
        }
        blob.close();
        std::ofstream mf(dir / "checkpoint.json");
        if (!mf) fail(errc::missing_file, "cannot write checkpoint manifest in " + dir.string());
        mf << manifest.dump(2) << "\n";
    }

    static TensorArchive load(const std::filesystem::path& dir, nlohmann::json* extra = nullptr) {
        std::ifstream mf(dir / "checkpoint.json");
        if (!mf) fail(errc::missing_file, "missing checkpoint manifest in " + dir.string());
        nlohmann::json manifest;
        try {
            mf >> manifest;
        } catch (const nlohmann::json::exception& e) {
            fail(errc::corrupt_checkpoint, "bad checkpoint manifest: " + std::string(e.what()));
        }
        if (extra && manifest.contains("extra")) *extra = manifest["extra"];

        std::ifstream blob(dir / "tensors.bin", std::ios::binary | std::ios::ate);
        if (!blob) fail(errc::corrupt_checkpoint, "missing checkpoint blob in " + dir.string());
        const auto blob_size = static_cast<std::uint64_t>(blob.tellg());

        TensorArchive a;
        for (const auto& tj : manifest.at("tensors")) {
            const std::string name = tj.at("name").get<std::string>();
            const auto rows = tj.at("rows").get<Eigen::Index>();
            const auto cols = tj.at("cols").get<Eigen::Index>();
            const auto offset = tj.at("offset").get<std::uint64_t>();
            const size_t bytes = sizeof(double) * static_cast<size_t>(rows * cols);
            if (offset + bytes > blob_size)
                fail(errc::corrupt_checkpoint, "checkpoint blob truncated at tensor " + name);
            nn::Mat m(rows, cols);
            blob.seekg(static_cast<std::streamoff>(offset));
            blob.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(bytes));
            if (!blob) fail(errc::corrupt_checkpoint, "short read at tensor " + name);
            const std::uint32_t crc = detail::crc32(m.data(), bytes);
            if (crc != tj.at("crc32").get<std::uint32_t>())
                fail(errc::corrupt_checkpoint, "checksum mismatch at tensor " + name);
            a.tensors_[name] = std::move(m);
        }
        return a;
    }

private:
    std::map<std::string, nn::Mat> tensors_;
};

// Restores a module's parameters from an archive, verifying shapes.
template <typename Module>
void restore_module(Module& m, const TensorArchive& a, const std::string& prefix) {
    m.visit("", [&](const std::string& name, nn::Param& p) {
        const nn::Mat& stored = a.get(prefix + name);
        if (stored.rows() != p.value.rows() || stored.cols() != p.value.cols())
            fail(errc::config_mismatch,
                 "checkpoint shape mismatch at " + prefix + name + ": stored " +
                     std::to_string(stored.rows()) + "x" + std::to_string(stored.cols()) +
                     ", expected " + std::to_string(p.value.rows()) + "x" +
                     std::to_string(p.value.cols()));
        p.value = stored;
    });
}

template <typename Module>
void archive_module(Module& m, TensorArchive& a, const std::string& prefix) {
    m.visit("", [&](const std::string& name, nn::Param& p) { a.put(prefix + name, p.value); });
}

}  // namespace tecg
