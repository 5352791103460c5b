#include "orthoseg/raster.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace orthoseg {

namespace fs = std::filesystem;

bool RasterStack::has_band(BandId id) const {
    for (const auto& [b, g] : bands)
        if (b == id) return true;
    return false;
}

const Grid& RasterStack::band(BandId id) const {
    for (const auto& [b, g] : bands)
        if (b == id) return g;
    throw Error("band " + to_string(id) + " absent from raster");
}

Grid& RasterStack::band(BandId id) {
    for (auto& [b, g] : bands)
        if (b == id) return g;
    throw Error("band " + to_string(id) + " absent from raster");
}

std::vector<BandId> RasterStack::band_ids() const {
    std::vector<BandId> ids;
    ids.reserve(bands.size());
    for (const auto& [b, g] : bands) ids.push_back(b);
    return ids;
}

bool RasterStack::uniform() const {
    for (const auto& [b, g] : bands)
        if (g.rows() != height() || g.cols() != width()) return false;
    return true;
}

Grid nearest_resample(const Grid& src, int target_width, int target_height) {
    if (target_width <= 0 || target_height <= 0)
        throw Error("resample target dimensions must be positive");
    if (src.size() == 0) throw Error("cannot resample an empty grid");
    const int sh = static_cast<int>(src.rows());
    const int sw = static_cast<int>(src.cols());
    if (sh == target_height && sw == target_width) return src;
    Grid out(target_height, target_width);
    for (int r = 0; r < target_height; ++r) {
        int sr = std::min(sh - 1, static_cast<int>((r + 0.5) * sh / target_height));
        for (int c = 0; c < target_width; ++c) {
            int sc = std::min(sw - 1, static_cast<int>((c + 0.5) * sw / target_width));
            out(r, c) = src(sr, sc);
        }
    }
    return out;
}

RasterStack resample_to_grid(const RasterStack& stack, BandId band, int target_width,
                             int target_height) {
    if (!stack.has_band(band)) throw Error("band " + to_string(band) + " absent from raster");
    RasterStack out = stack;
    out.band(band) = nearest_resample(stack.band(band), target_width, target_height);
    return out;
}

RasterStack harmonize_to_finest(const RasterStack& stack) {
    int w = 0, h = 0;
    for (const auto& [b, g] : stack.bands) {
        w = std::max(w, static_cast<int>(g.cols()));
        h = std::max(h, static_cast<int>(g.rows()));
    }
    RasterStack out = stack;
    for (auto& [b, g] : out.bands)
        if (g.cols() != w || g.rows() != h) g = nearest_resample(g, w, h);
    return out;
}

Grid mask_to_binary(const Grid& mask, std::optional<float> nodata) {
    Grid out(mask.rows(), mask.cols());
    const float nd = nodata.value_or(std::numeric_limits<float>::quiet_NaN());
    for (Eigen::Index i = 0; i < mask.size(); ++i) {
        float v = mask.data()[i];
        out.data()[i] = (v == 1.0f && v != nd) ? 1.0f : 0.0f;
    }
    return out;
}

namespace {

void validate_ingested(RasterStack& stack, const fs::path& path) {
    if (stack.bands.empty()) throw Error("raster has no bands: " + path.string());
    for (std::size_t i = 0; i < stack.bands.size(); ++i)
        for (std::size_t j = i + 1; j < stack.bands.size(); ++j)
            if (stack.bands[i].first == stack.bands[j].first)
                throw Error("duplicate band " + to_string(stack.bands[i].first) + " in " +
                            path.string());
    for (auto& [b, g] : stack.bands) {
        if (g.rows() < 1 || g.cols() < 1) throw Error("raster has empty band: " + path.string());
        const float nd = stack.nodata.value_or(std::numeric_limits<float>::quiet_NaN());
        for (Eigen::Index i = 0; i < g.size(); ++i) {
            float v = g.data()[i];
            if (v != nd && !std::isfinite(v))
                throw Error("non-finite pixel value in " + path.string());
        }
        if (b == BandId::MASK) {
            for (Eigen::Index i = 0; i < g.size(); ++i) {
                float v = g.data()[i];
                if (v != 0.0f && v != 1.0f && v != nd)
                    throw Error("mask values must be 0/1/nodata: " + path.string());
            }
        }
    }
}

RasterStack reorder_bands(RasterStack stack, const std::vector<BandId>& expected,
                          const fs::path& path) {
    if (expected.empty()) return stack;
    if (stack.bands.size() != expected.size())
        throw Error("band count mismatch: " + path.string() + " has " +
                    std::to_string(stack.bands.size()) + " bands, expected " +
                    std::to_string(expected.size()));
    for (std::size_t i = 0; i < expected.size(); ++i)
        for (std::size_t j = i + 1; j < expected.size(); ++j)
            if (expected[i] == expected[j])
                throw Error("duplicate band " + to_string(expected[i]) + " requested");
    RasterStack out;
    out.geo_transform = stack.geo_transform;
    out.nodata = stack.nodata;
    for (BandId want : expected) {
        bool found = false;
        for (auto& [b, g] : stack.bands) {
            if (b == want) {
                out.bands.emplace_back(b, std::move(g));
                found = true;
                break;
            }
        }
        if (!found) throw Error("band " + to_string(want) + " absent from " + path.string());
    }
    return out;
}

bool is_tiff(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) {
        return static_cast<char>(std::tolower(c));
    });
    return ext == ".tif" || ext == ".tiff";
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    std::size_t b = s.find_last_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
}

}  // namespace

RasterStack load_raster(const fs::path& path, const std::vector<BandId>& expected_bands) {
    if (!fs::exists(path)) throw Error("raster file not found: " + path.string());
    RasterStack stack;
    bool ids_from_file = true;
    if (is_tiff(path))
        stack = load_geotiff(path, &ids_from_file);
    else
        stack = load_sidecar(path, &ids_from_file);

    if (expected_bands.empty()) {
        if (!ids_from_file)
            throw Error("band identities not recorded in " + path.string() +
                        "; pass the expected band list");
    } else if (!ids_from_file) {
        // Anonymous bands are assigned the expected identities positionally.
        if (stack.bands.size() != expected_bands.size())
            throw Error("band count mismatch: " + path.string() + " has " +
                        std::to_string(stack.bands.size()) + " bands, expected " +
                        std::to_string(expected_bands.size()));
        for (std::size_t i = 0; i < expected_bands.size(); ++i)
            stack.bands[i].first = expected_bands[i];
    } else {
        stack = reorder_bands(std::move(stack), expected_bands, path);
    }

    validate_ingested(stack, path);
    stack = harmonize_to_finest(stack);
    if (!stack.uniform()) throw Error("bands disagree in size after ingestion: " + path.string());
    return stack;
}

void save_raster(const RasterStack& stack, const fs::path& path) {
    if (stack.bands.empty()) throw Error("refusing to save raster with no bands");
    if (!stack.uniform()) throw Error("refusing to save raster with non-uniform band sizes");
    if (is_tiff(path))
        save_geotiff(stack, path);
    else
        save_sidecar(stack, path);
}

// --- raw sidecar format -----------------------------------------------------
//
// <name>.hdr  UTF-8 key=value lines: width, height, bands, band_ids,
//             optional nodata and geo_transform (6 comma-separated reals).
// <name>.raw  row-major band-sequential 32-bit little-endian IEEE floats.

namespace {

fs::path sidecar_base(const fs::path& p) {
    fs::path base = p;
    if (base.extension() == ".hdr" || base.extension() == ".raw") base.replace_extension();
    return base;
}

}  // namespace

RasterStack load_sidecar(const fs::path& path, bool* ids_from_file) {
    if (ids_from_file) *ids_from_file = true;
    fs::path base = sidecar_base(path);
    fs::path hdr = base;
    hdr += ".hdr";
    fs::path raw = base;
    raw += ".raw";
    if (!fs::exists(hdr)) throw Error("sidecar header not found: " + hdr.string());
    if (!fs::exists(raw)) throw Error("sidecar data not found: " + raw.string());

    std::ifstream in(hdr);
    std::int64_t width = -1, height = -1, nbands = -1;
    std::vector<BandId> ids;
    std::optional<float> nodata;
    std::optional<std::array<double, 6>> geo;
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) throw Error("malformed header line in " + hdr.string());
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key == "width") width = std::stoll(val);
        else if (key == "height") height = std::stoll(val);
        else if (key == "bands") nbands = std::stoll(val);
        else if (key == "band_ids") ids = band_list_from_string(val);
        else if (key == "nodata") nodata = std::stof(val);
        else if (key == "geo_transform") {
            std::array<double, 6> gt{};
            std::stringstream ss(val);
            std::string tok;
            int i = 0;
            while (std::getline(ss, tok, ',') && i < 6) gt[i++] = std::stod(tok);
            if (i != 6) throw Error("geo_transform needs 6 values in " + hdr.string());
            geo = gt;
        } else {
            throw Error("unknown header key '" + key + "' in " + hdr.string());
        }
    }
    if (width < 1 || height < 1 || nbands < 1)
        throw Error("header missing width/height/bands: " + hdr.string());
    if (ids.empty()) {
        // Anonymous file: hand out placeholder identities; the caller must
        // supply the real ones.
        if (nbands > static_cast<std::int64_t>(kAllBands.size()))
            throw Error("too many bands without identities in " + hdr.string());
        for (std::int64_t b = 0; b < nbands; ++b)
            ids.push_back(kAllBands[static_cast<std::size_t>(b)]);
        if (ids_from_file) *ids_from_file = false;
    } else if (static_cast<std::int64_t>(ids.size()) != nbands) {
        throw Error("band_ids count disagrees with bands in " + hdr.string());
    }
    const std::int64_t px = width * height;
    if (px > (std::int64_t{1} << 34) / nbands) throw Error("raster dimension overflow: " + hdr.string());

    std::ifstream data(raw, std::ios::binary);
    RasterStack stack;
    stack.nodata = nodata;
    stack.geo_transform = geo;
    for (std::int64_t b = 0; b < nbands; ++b) {
        Grid g(height, width);
        data.read(reinterpret_cast<char*>(g.data()), px * sizeof(float));
        if (!data) throw Error("sidecar data truncated: " + raw.string());
        stack.bands.emplace_back(ids[static_cast<std::size_t>(b)], std::move(g));
    }
    char extra;
    if (data.read(&extra, 1)) throw Error("sidecar data larger than header claims: " + raw.string());
    return stack;
}

void save_sidecar(const RasterStack& stack, const fs::path& path) {
    // The single width/height header cannot express mixed resolutions.
    if (!stack.uniform()) throw Error("sidecar format requires uniform band sizes");
    fs::path base = sidecar_base(path);
    fs::path hdr = base;
    hdr += ".hdr";
    fs::path raw = base;
    raw += ".raw";

    std::ofstream out(hdr);
    if (!out) throw Error("cannot write " + hdr.string());
    out << "width=" << stack.width() << "\n";
    out << "height=" << stack.height() << "\n";
    out << "bands=" << stack.bands.size() << "\n";
    out << "band_ids=" << band_list_string(stack.band_ids()) << "\n";
    if (stack.nodata) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(*stack.nodata));
        out << "nodata=" << buf << "\n";
    }
    if (stack.geo_transform) {
        out << "geo_transform=";
        for (int i = 0; i < 6; ++i) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.17g", (*stack.geo_transform)[i]);
            out << (i ? "," : "") << buf;
        }
        out << "\n";
    }
    out.close();

    std::ofstream data(raw, std::ios::binary);
    if (!data) throw Error("cannot write " + raw.string());
    for (const auto& [b, g] : stack.bands)
        data.write(reinterpret_cast<const char*>(g.data()),
                   static_cast<std::streamsize>(g.size() * sizeof(float)));
    if (!data) throw Error("short write to " + raw.string());
}

void save_pgm_preview(const Grid& grid, const fs::path& path) {
    float lo = grid.minCoeff();
    float hi = grid.maxCoeff();
    float scale = (hi > lo) ? 255.0f / (hi - lo) : 0.0f;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << "P5\n" << grid.cols() << " " << grid.rows() << "\n255\n";
    for (Eigen::Index i = 0; i < grid.size(); ++i) {
        float v = grid.data()[i];
        int val = (hi > lo) ? static_cast<int>(std::lround((v - lo) * scale))
                            : (v != 0.0f ? 255 : 0);
        out.put(static_cast<char>(std::clamp(val, 0, 255)));
    }
}

}  // namespace orthoseg
