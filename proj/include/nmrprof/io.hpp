#pragma once

#include <string>

#include "nmrprof/model.hpp"
#include "nmrprof/types.hpp"

namespace nmrprof {

/// Load a spectral library from its JSON document. Collects every schema
/// and invariant violation into one ValidationError instead of stopping at
/// the first.
SpectralLibrary loadLibrary(const std::string& path);
SpectralLibrary libraryFromJsonText(const std::string& text, const std::string& origin);

void saveLibrary(const SpectralLibrary& library, const std::string& path);
std::string libraryToJsonText(const SpectralLibrary& library);

/// Two-column "ppm,intensity" CSV with a header line. The grid must be
/// uniform within 1e-9 relative step tolerance.
Spectrum readSpectrumCsv(const std::string& path);
void writeSpectrumCsv(const Spectrum& spectrum, const std::string& path);

/// FID JSON: {dwellTime_s, spectrometerFreq_MHz, sweepWidth_Hz, samples:[[re,im],...]}
Fid readFidJson(const std::string& path);
void writeFidJson(const Fid& fid, const std::string& path);

} // namespace nmrprof
