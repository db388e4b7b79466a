// Copyright 2026 The EvoScene Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "evoscene/completion.hpp"
#include "evoscene/config.hpp"
#include "evoscene/errors.hpp"
#include "evoscene/evaluate.hpp"
#include "evoscene/geometry.hpp"
#include "evoscene/image.hpp"
#include "evoscene/interfaces.hpp"
#include "evoscene/io.hpp"
#include "evoscene/latent.hpp"
#include "evoscene/log.hpp"
#include "evoscene/mesh.hpp"
#include "evoscene/meshing.hpp"
#include "evoscene/occupancy.hpp"
#include "evoscene/optimize.hpp"
#include "evoscene/oracle.hpp"
#include "evoscene/pipeline.hpp"
#include "evoscene/protocol.hpp"
#include "evoscene/remote.hpp"
#include "evoscene/rendering.hpp"
#include "evoscene/spatial_prior.hpp"
#include "evoscene/synthbench.hpp"
#include "evoscene/trajectory.hpp"
#include "evoscene/views.hpp"
