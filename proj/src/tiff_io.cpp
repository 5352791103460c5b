#include "orthoseg/raster.hpp"

#include <tiffio.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <mutex>
#include <vector>

// GeoTIFF georeferencing tags plus GDAL's nodata tag. libtiff does not know
// them out of the box; they are merged in through a tag extender.
namespace {

constexpr ttag_t kTagPixelScale = 33550;
constexpr ttag_t kTagTiepoints = 33922;
constexpr ttag_t kTagTransform = 34264;
constexpr ttag_t kTagGdalNodata = 42113;

const TIFFFieldInfo kCustomFields[] = {
    {kTagPixelScale, TIFF_VARIABLE, TIFF_VARIABLE, TIFF_DOUBLE, FIELD_CUSTOM, 1, 1,
     const_cast<char*>("GeoPixelScale")},
    {kTagTiepoints, TIFF_VARIABLE, TIFF_VARIABLE, TIFF_DOUBLE, FIELD_CUSTOM, 1, 1,
     const_cast<char*>("GeoTiePoints")},
    {kTagTransform, TIFF_VARIABLE, TIFF_VARIABLE, TIFF_DOUBLE, FIELD_CUSTOM, 1, 1,
     const_cast<char*>("GeoTransformationMatrix")},
    {kTagGdalNodata, TIFF_VARIABLE, TIFF_VARIABLE, TIFF_ASCII, FIELD_CUSTOM, 1, 0,
     const_cast<char*>("GDALNoDataValue")},
};

TIFFExtendProc g_parent_extender = nullptr;

void tag_extender(TIFF* tif) {
    TIFFMergeFieldInfo(tif, kCustomFields, sizeof(kCustomFields) / sizeof(kCustomFields[0]));
    if (g_parent_extender) g_parent_extender(tif);
}

void install_extender_once() {
    static std::once_flag flag;
    std::call_once(flag, [] {
        g_parent_extender = TIFFSetTagExtender(tag_extender);
        TIFFSetWarningHandler(nullptr);
    });
}

struct TiffCloser {
    void operator()(TIFF* t) const {
        if (t) TIFFClose(t);
    }
};
using TiffPtr = std::unique_ptr<TIFF, TiffCloser>;

constexpr const char* kBandPrefix = "bands=";

template <class T>
float sample_to_float(const std::uint8_t* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return static_cast<float>(v);
}

using SampleReader = float (*)(const std::uint8_t*);

SampleReader pick_reader(std::uint16_t fmt, std::uint16_t bits, const std::string& path) {
    using orthoseg::Error;
    if (fmt == SAMPLEFORMAT_IEEEFP) {
        if (bits == 32) return &sample_to_float<float>;
        if (bits == 64) return &sample_to_float<double>;
    } else if (fmt == SAMPLEFORMAT_INT) {
        if (bits == 8) return &sample_to_float<std::int8_t>;
        if (bits == 16) return &sample_to_float<std::int16_t>;
        if (bits == 32) return &sample_to_float<std::int32_t>;
    } else if (fmt == SAMPLEFORMAT_UINT) {
        if (bits == 8) return &sample_to_float<std::uint8_t>;
        if (bits == 16) return &sample_to_float<std::uint16_t>;
        if (bits == 32) return &sample_to_float<std::uint32_t>;
    }
    throw Error("unsupported TIFF sample layout (format " + std::to_string(fmt) + ", " +
                std::to_string(bits) + " bits) in " + path);
}

}  // namespace

namespace orthoseg {

namespace fs = std::filesystem;

namespace {

// Reads every band plane of the currently selected directory.
std::vector<Grid> read_directory(TIFF* tif, const std::string& path) {
    std::uint32_t width = 0, height = 0;
    TIFFGetField(tif, TIFFTAG_IMAGEWIDTH, &width);
    TIFFGetField(tif, TIFFTAG_IMAGELENGTH, &height);
    if (width == 0 || height == 0) throw Error("corrupt TIFF (zero dimensions): " + path);
    if (static_cast<std::uint64_t>(width) * height > (std::uint64_t{1} << 32))
        throw Error("raster dimension overflow: " + path);

    std::uint16_t samples = 1, bits = 1, fmt = SAMPLEFORMAT_UINT, planar = PLANARCONFIG_CONTIG;
    TIFFGetFieldDefaulted(tif, TIFFTAG_SAMPLESPERPIXEL, &samples);
    TIFFGetFieldDefaulted(tif, TIFFTAG_BITSPERSAMPLE, &bits);
    TIFFGetFieldDefaulted(tif, TIFFTAG_SAMPLEFORMAT, &fmt);
    TIFFGetFieldDefaulted(tif, TIFFTAG_PLANARCONFIG, &planar);
    if (samples == 0) throw Error("corrupt TIFF (no samples): " + path);
    SampleReader read_sample = pick_reader(fmt, bits, path);
    const std::size_t bytes = bits / 8;

    std::vector<Grid> planes(samples, Grid(height, width));

    auto scatter_rows = [&](const std::uint8_t* buf, std::uint32_t row0, std::uint32_t nrows,
                            std::uint32_t col0, std::uint32_t ncols, std::uint32_t row_stride_px,
                            int plane_lo, int plane_count) {
        for (std::uint32_t r = 0; r < nrows; ++r) {
            if (row0 + r >= height) break;
            const std::uint8_t* rowp = buf + static_cast<std::size_t>(r) * row_stride_px *
                                                 plane_count * bytes;
            for (std::uint32_t c = 0; c < ncols; ++c) {
                if (col0 + c >= width) break;
                for (int s = 0; s < plane_count; ++s) {
                    float v = read_sample(rowp + (static_cast<std::size_t>(c) * plane_count + s) *
                                                     bytes);
                    planes[static_cast<std::size_t>(plane_lo + s)](row0 + r, col0 + c) = v;
                }
            }
        }
    };

    const bool contig = (planar == PLANARCONFIG_CONTIG) || samples == 1;
    const int nplanes_per_chunk = contig ? samples : 1;

    if (TIFFIsTiled(tif)) {
        std::uint32_t tw = 0, th = 0;
        TIFFGetField(tif, TIFFTAG_TILEWIDTH, &tw);
        TIFFGetField(tif, TIFFTAG_TILELENGTH, &th);
        std::vector<std::uint8_t> buf(TIFFTileSize(tif));
        for (int plane = 0; plane < (contig ? 1 : samples); ++plane) {
            for (std::uint32_t row = 0; row < height; row += th) {
                for (std::uint32_t col = 0; col < width; col += tw) {
                    ttile_t tile = TIFFComputeTile(tif, col, row, 0, static_cast<tsample_t>(plane));
                    if (TIFFReadEncodedTile(tif, tile, buf.data(), buf.size()) < 0)
                        throw Error("unreadable TIFF tile in " + path);
                    scatter_rows(buf.data(), row, th, col, tw, tw, plane, nplanes_per_chunk);
                }
            }
        }
    } else {
        std::uint32_t rows_per_strip = height;
        TIFFGetFieldDefaulted(tif, TIFFTAG_ROWSPERSTRIP, &rows_per_strip);
        if (rows_per_strip == 0 || rows_per_strip > height) rows_per_strip = height;
        std::vector<std::uint8_t> buf(TIFFStripSize(tif));
        for (int plane = 0; plane < (contig ? 1 : samples); ++plane) {
            for (std::uint32_t row = 0; row < height; row += rows_per_strip) {
                tstrip_t strip = TIFFComputeStrip(tif, row, static_cast<tsample_t>(plane));
                tmsize_t got = TIFFReadEncodedStrip(tif, strip, buf.data(), buf.size());
                if (got < 0) throw Error("unreadable TIFF strip in " + path);
                std::uint32_t nrows = std::min(rows_per_strip, height - row);
                scatter_rows(buf.data(), row, nrows, 0, width, width, plane, nplanes_per_chunk);
            }
        }
    }
    return planes;
}

std::optional<std::array<double, 6>> read_geo_transform(TIFF* tif) {
    std::uint16_t n = 0;
    double* d = nullptr;
    if (TIFFGetField(tif, kTagTransform, &n, &d) && n >= 16) {
        return std::array<double, 6>{d[3], d[0], d[1], d[7], d[4], d[5]};
    }
    double sx = 1.0, sy = 1.0;
    bool have_scale = false;
    if (TIFFGetField(tif, kTagPixelScale, &n, &d) && n >= 2) {
        sx = d[0];
        sy = d[1];
        have_scale = true;
    }
    if (TIFFGetField(tif, kTagTiepoints, &n, &d) && n >= 6 && have_scale) {
        double i = d[0], j = d[1], x = d[3], y = d[4];
        return std::array<double, 6>{x - i * sx, sx, 0.0, y + j * sy, 0.0, -sy};
    }
    return std::nullopt;
}

}  // namespace

RasterStack load_geotiff(const fs::path& path, bool* ids_from_file) {
    install_extender_once();
    TiffPtr tif(TIFFOpen(path.string().c_str(), "r"));
    if (!tif) throw Error("unreadable or corrupt TIFF: " + path.string());

    RasterStack stack;
    std::vector<BandId> recorded_ids;
    char* desc = nullptr;
    if (TIFFGetField(tif.get(), TIFFTAG_IMAGEDESCRIPTION, &desc) && desc) {
        std::string d(desc);
        auto pos = d.find(kBandPrefix);
        if (pos != std::string::npos)
            recorded_ids = band_list_from_string(d.substr(pos + std::strlen(kBandPrefix)));
    }
    stack.geo_transform = read_geo_transform(tif.get());
    char* nodata_str = nullptr;
    if (TIFFGetField(tif.get(), kTagGdalNodata, &nodata_str) && nodata_str)
        stack.nodata = std::strtof(nodata_str, nullptr);

    std::vector<Grid> planes;
    do {
        auto dir_planes = read_directory(tif.get(), path.string());
        for (auto& p : dir_planes) planes.push_back(std::move(p));
    } while (TIFFReadDirectory(tif.get()));

    const bool have_ids = recorded_ids.size() == planes.size();
    if (ids_from_file) *ids_from_file = have_ids;
    for (std::size_t i = 0; i < planes.size(); ++i) {
        // Placeholder identities for anonymous files; load_raster replaces
        // them with the caller's expected list.
        BandId id = have_ids ? recorded_ids[i] : kAllBands[i % kAllBands.size()];
        stack.bands.emplace_back(id, std::move(planes[i]));
    }
    return stack;
}

void save_geotiff(const RasterStack& stack, const fs::path& path) {
    install_extender_once();
    TiffPtr tif(TIFFOpen(path.string().c_str(), "w"));
    if (!tif) throw Error("cannot write " + path.string());
    TIFF* t = tif.get();

    const std::uint32_t width = static_cast<std::uint32_t>(stack.width());
    const std::uint32_t height = static_cast<std::uint32_t>(stack.height());
    const std::uint16_t samples = static_cast<std::uint16_t>(stack.bands.size());

    TIFFSetField(t, TIFFTAG_IMAGEWIDTH, width);
    TIFFSetField(t, TIFFTAG_IMAGELENGTH, height);
    TIFFSetField(t, TIFFTAG_SAMPLESPERPIXEL, samples);
    TIFFSetField(t, TIFFTAG_BITSPERSAMPLE, std::uint16_t{32});
    TIFFSetField(t, TIFFTAG_SAMPLEFORMAT, SAMPLEFORMAT_IEEEFP);
    TIFFSetField(t, TIFFTAG_COMPRESSION, COMPRESSION_NONE);
    TIFFSetField(t, TIFFTAG_PHOTOMETRIC, PHOTOMETRIC_MINISBLACK);
    TIFFSetField(t, TIFFTAG_PLANARCONFIG, PLANARCONFIG_SEPARATE);
    TIFFSetField(t, TIFFTAG_ROWSPERSTRIP, TIFFDefaultStripSize(t, 0));
    if (samples > 1) {
        std::vector<std::uint16_t> extra(samples - 1, EXTRASAMPLE_UNSPECIFIED);
        TIFFSetField(t, TIFFTAG_EXTRASAMPLES, static_cast<std::uint16_t>(extra.size()),
                     extra.data());
    }

    std::string desc = std::string(kBandPrefix) + band_list_string(stack.band_ids());
    TIFFSetField(t, TIFFTAG_IMAGEDESCRIPTION, desc.c_str());

    if (stack.geo_transform) {
        const auto& gt = *stack.geo_transform;
        if (gt[2] == 0.0 && gt[4] == 0.0 && gt[5] < 0.0) {
            double scale[3] = {gt[1], -gt[5], 0.0};
            double tie[6] = {0.0, 0.0, 0.0, gt[0], gt[3], 0.0};
            TIFFSetField(t, kTagPixelScale, std::uint16_t{3}, scale);
            TIFFSetField(t, kTagTiepoints, std::uint16_t{6}, tie);
        } else {
            double m[16] = {gt[1], gt[2], 0, gt[0], gt[4], gt[5], 0, gt[3],
                            0,     0,     0, 0,     0,     0,     0, 1};
            TIFFSetField(t, kTagTransform, std::uint16_t{16}, m);
        }
    }
    if (stack.nodata) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(*stack.nodata));
        TIFFSetField(t, kTagGdalNodata, buf);
    }

    std::uint32_t rows_per_strip = 0;
    TIFFGetField(t, TIFFTAG_ROWSPERSTRIP, &rows_per_strip);
    for (std::uint16_t s = 0; s < samples; ++s) {
        const Grid& g = stack.bands[s].second;
        for (std::uint32_t row = 0; row < height; row += rows_per_strip) {
            std::uint32_t nrows = std::min(rows_per_strip, height - row);
            tstrip_t strip = TIFFComputeStrip(t, row, s);
            tmsize_t nbytes = static_cast<tmsize_t>(nrows) * width * sizeof(float);
            // Grid rows are contiguous, so a strip is a direct memory window.
            const float* src = g.data() + static_cast<std::size_t>(row) * width;
            if (TIFFWriteEncodedStrip(t, strip, const_cast<float*>(src), nbytes) < 0)
                throw Error("short write to " + path.string());
        }
    }
}

}  // namespace orthoseg
