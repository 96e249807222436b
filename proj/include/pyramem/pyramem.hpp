#pragma once

#include "pyramem/adapters.hpp"
#include "pyramem/bench.hpp"
#include "pyramem/config.hpp"
#include "pyramem/core_types.hpp"
#include "pyramem/embedding.hpp"
#include "pyramem/embedding_index.hpp"
#include "pyramem/error.hpp"
#include "pyramem/identity_bank.hpp"
#include "pyramem/ingest.hpp"
#include "pyramem/link_builder.hpp"
#include "pyramem/log.hpp"
#include "pyramem/memory_state.hpp"
#include "pyramem/prompts.hpp"
#include "pyramem/pyramid_store.hpp"
#include "pyramem/reasoner.hpp"
#include "pyramem/remote.hpp"
#include "pyramem/scripted.hpp"
#include "pyramem/service.hpp"
#include "pyramem/stream.hpp"
#include "pyramem/text.hpp"
