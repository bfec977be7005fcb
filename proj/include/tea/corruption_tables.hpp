#pragma once

// Severity parameter tables for the corruption operators. Project-defined
// constants: these are this benchmark's own values, versioned so results can
// name the table they were produced with. Noise magnitudes are expressed on
// the [0,1] intensity scale; inputs live in [-1,1].

namespace tea {

inline constexpr int kSeverityTableVersion = 1;
inline constexpr int kSeverityLevels = 5;

inline constexpr double kGaussianNoiseStd01[kSeverityLevels] = {0.04, 0.08, 0.12, 0.18, 0.26};

// Photon count per unit intensity; fewer photons, more shot noise.
inline constexpr double kShotNoisePhotons[kSeverityLevels] = {500, 250, 100, 75, 50};

inline constexpr double kImpulseNoiseProb[kSeverityLevels] = {0.01, 0.02, 0.04, 0.07, 0.10};

// Box-filter kernel size.
inline constexpr int kDefocusKernel[kSeverityLevels] = {3, 3, 5, 5, 7};

// Blend factor toward the per-channel mean; 1 is the identity.
inline constexpr double kContrastFactor[kSeverityLevels] = {0.75, 0.55, 0.40, 0.30, 0.20};

inline constexpr double kBrightnessOffset01[kSeverityLevels] = {0.10, 0.20, 0.30, 0.40, 0.50};

// Square block edge for downsample + nearest upsample.
inline constexpr int kPixelateBlock[kSeverityLevels] = {2, 2, 3, 3, 4};

}  // namespace tea
