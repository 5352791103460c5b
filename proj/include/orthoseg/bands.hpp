#pragma once

#include "orthoseg/common.hpp"

#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace orthoseg {

/// Spectral band identities. B..TH come from the multispectral sensor,
/// HD_* from the high-definition RGB camera, MASK is the binary ground truth.
enum class BandId { B, G, R, RE, NIR, TH, HD_R, HD_G, HD_B, MASK };

inline constexpr std::array<BandId, 10> kAllBands = {
    BandId::B,    BandId::G,    BandId::R,    BandId::RE,   BandId::NIR,
    BandId::TH,   BandId::HD_R, BandId::HD_G, BandId::HD_B, BandId::MASK};

inline std::string to_string(BandId b) {
    switch (b) {
        case BandId::B: return "B";
        case BandId::G: return "G";
        case BandId::R: return "R";
        case BandId::RE: return "RE";
        case BandId::NIR: return "NIR";
        case BandId::TH: return "TH";
        case BandId::HD_R: return "HD_R";
        case BandId::HD_G: return "HD_G";
        case BandId::HD_B: return "HD_B";
        case BandId::MASK: return "MASK";
    }
    throw Error("invalid BandId");
}

inline BandId band_from_string(std::string_view s) {
    for (BandId b : kAllBands)
        if (to_string(b) == s) return b;
    throw Error("unknown band id '" + std::string(s) + "'");
}

inline std::string band_list_string(const std::vector<BandId>& bands) {
    std::string out;
    for (std::size_t i = 0; i < bands.size(); ++i) {
        if (i) out += ",";
        out += to_string(bands[i]);
    }
    return out;
}

inline std::vector<BandId> band_list_from_string(std::string_view csv) {
    std::vector<BandId> out;
    std::size_t pos = 0;
    while (pos <= csv.size()) {
        std::size_t comma = csv.find(',', pos);
        if (comma == std::string_view::npos) comma = csv.size();
        std::string_view tok = csv.substr(pos, comma - pos);
        while (!tok.empty() && (tok.front() == ' ' || tok.front() == '\t')) tok.remove_prefix(1);
        while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\t')) tok.remove_suffix(1);
        if (!tok.empty()) out.push_back(band_from_string(tok));
        pos = comma + 1;
    }
    return out;
}

}  // namespace orthoseg
