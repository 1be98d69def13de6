#include "manifest.hpp"

#include <array>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <openssl/evp.h>

#ifndef SLB_VERSION
#define SLB_VERSION "unknown"
#endif

namespace slb::tool {

json load_json(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        // byte is 1-based and points just past the offending character
        const std::size_t at = e.byte == 0 ? 0 : std::min<std::size_t>(e.byte - 1, text.size());
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i < at; ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        std::string what = e.what();
        // Drop nlohmann's own prefix; the position is reported above.
        if (const auto p = what.find("column "); p != std::string::npos) {
            if (const auto q = what.find(": ", p); q != std::string::npos) what = what.substr(q + 2);
        } else if (const auto r = what.find("] "); r != std::string::npos) {
            what = what.substr(r + 2);
        }
        throw std::runtime_error(path.string() + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + what);
    }
}

json load_config(const fs::path& path, const std::string& subcommand) {
    json doc = load_json(path);
    if (doc.is_object() && doc.contains("subcommand") && doc.contains("config")) {
        const auto recorded = doc["subcommand"].get<std::string>();
        if (recorded != subcommand) {
            throw std::runtime_error("'" + path.string() + "' is a manifest for '" + recorded + "', not '" + subcommand +
                                     "'");
        }
        return doc["config"];
    }
    return doc;
}

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read '" + path.string() + "' for hashing");
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw std::runtime_error("sha256 unavailable");
    }
    std::array<char, 1 << 16> chunk;
    while (in) {
        in.read(chunk.data(), chunk.size());
        if (in.gcount() > 0) EVP_DigestUpdate(ctx, chunk.data(), static_cast<std::size_t>(in.gcount()));
    }
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md.data(), &len);
    EVP_MD_CTX_free(ctx);
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return hex.str();
}

fs::path write_manifest(const fs::path& out_dir, const std::string& subcommand, const json& config,
                        std::uint64_t seed, const std::vector<std::string>& outputs) {
    json digests = json::object();
    for (const auto& name : outputs) digests[name] = sha256_file(out_dir / name);
    const json m{{"subcommand", subcommand},
                 {"config", config},
                 {"seed", seed},
                 {"tool_version", SLB_VERSION},
                 {"outputs", digests}};
    const auto path = out_dir / "manifest.json";
    write_text(path, m.dump(2) + "\n");
    return path;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    out.close();
    if (!out) throw std::runtime_error("failed to write '" + path.string() + "'");
}

}  // namespace slb::tool
