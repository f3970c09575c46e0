// Copyright 2026 The Laykari Authors
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <string>
#include <vector>

#include "laykari/dataset.hpp"
#include "laykari/metric_tempo.hpp"

namespace laykari {

// Renders tempo tracks (log-BPM axis) over a section-label band into a 24-bit
// BMP. Empty tracks or section lists are simply left out of the drawing.
void write_plot_bmp(const std::string& path, const TempoTrack& metric,
                    const TempoTrack& surface, const std::vector<Section>& sections);

} // namespace laykari
