#pragma once

// Umbrella header for the naturalmos library: waveform-in, MOS-out speech
// naturalness prediction with a CNN-BiLSTM regressor, a from-scratch
// reverse-mode autodiff core, degradation-based pretraining corpus
// synthesis, the two-stage transfer-learning protocol, and per-stimuli /
// per-system evaluation reports.

#include "naturalmos/adam.hpp"
#include "naturalmos/audio.hpp"
#include "naturalmos/checkpoint.hpp"
#include "naturalmos/config.hpp"
#include "naturalmos/degrade.hpp"
#include "naturalmos/errors.hpp"
#include "naturalmos/features.hpp"
#include "naturalmos/fft.hpp"
#include "naturalmos/gradcheck.hpp"
#include "naturalmos/lstm.hpp"
#include "naturalmos/manifest.hpp"
#include "naturalmos/metrics.hpp"
#include "naturalmos/model.hpp"
#include "naturalmos/ops.hpp"
#include "naturalmos/rng.hpp"
#include "naturalmos/tensor.hpp"
#include "naturalmos/training.hpp"
