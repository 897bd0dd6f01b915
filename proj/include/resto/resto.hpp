#pragma once

// Umbrella header for the speech restoration toolkit.

#include "resto/audio.hpp"
#include "resto/common.hpp"
#include "resto/config.hpp"
#include "resto/degrade.hpp"
#include "resto/diffusion.hpp"
#include "resto/fft.hpp"
#include "resto/latent.hpp"
#include "resto/loudness.hpp"
#include "resto/manifest.hpp"
#include "resto/mel.hpp"
#include "resto/metrics.hpp"
#include "resto/pipeline.hpp"
#include "resto/recovery.hpp"
#include "resto/resample.hpp"
#include "resto/rng.hpp"
#include "resto/segment.hpp"
#include "resto/stft.hpp"
#include "resto/wav.hpp"
