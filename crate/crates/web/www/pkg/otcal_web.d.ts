/* tslint:disable */
/* eslint-disable */

/**
 * Rows `[x, F(x), √det g, Φ, ρ(x)]` over `μ ± 3σ` for the normal pair
 * `N(μ, σ²) → N(μ̄, σ̄²)` under quadratic cost. `slope` rescales the optimal
 * map; `√det g = Φ = ρ` only at `slope = 1`.
 */
export function calibration_profile(mu: number, sigma: number, mubar: number, sigmabar: number, slope: number, samples: number): Float64Array;

/**
 * Rows `[α, r]` for directions `v = (cos α, sin α)` at `(x, F(x))` on the
 * graph of the scaled map. `r = ‖v‖_h / Φ(v)` on spacelike, positively
 * oriented directions and `NaN` elsewhere; it never exceeds 1 and reaches 1
 * along the optimal graph.
 */
export function direction_ratio(mu: number, sigma: number, mubar: number, sigmabar: number, slope: number, x: number, samples: number): Float64Array;

/**
 * Rows `[θ°, mass, ∫Φ]` for the graphs of rotations by `θ ∈ [0, max_deg]`
 * between standard planar Gaussians under the bilinear cost, meshed with
 * `cells` per axis on `[-4, 4]²`. A rotation preserves the measure but is
 * optimal only at `θ = 0`.
 */
export function rotation_masses(max_deg: number, steps: number, cells: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly calibration_profile: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly direction_ratio: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
    readonly rotation_masses: (a: number, b: number, c: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
