#pragma once
// Umbrella header for the FLEX forward-learning engine.

#include "flex/content.hpp"
#include "flex/errors.hpp"
#include "flex/evaluators.hpp"
#include "flex/experience.hpp"
#include "flex/explorer.hpp"
#include "flex/gateway.hpp"
#include "flex/inheritance.hpp"
#include "flex/prompts.hpp"
#include "flex/retrieval.hpp"
#include "flex/serialize.hpp"
#include "flex/synthetic.hpp"
#include "flex/task.hpp"
#include "flex/trainer.hpp"
#include "flex/updater.hpp"
