/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Boundary sample as `[x1, x2, x1, x2, ...]`.
     */
    boundary_points(): Float64Array;
    /**
     * ci_width of `feature` (0 or 1) on a `resolution` x `resolution` grid.
     */
    ci_grid(resolution: number, feature: number): Float64Array;
    /**
     * `[x1_low, x2_low, x1_high, x2_high]`.
     */
    static domain(): Float64Array;
    jitter(): number;
    /**
     * Samples the boundary, explains `train_count` uniform points with
     * exact KernelSHAP and fits the GP.
     */
    constructor(lambda: number, rho: number, train_count: number, seed: bigint);
    /**
     * Normalized WEG similarity between `(x1, x2)` and every grid cell.
     */
    similarity_grid(x1: number, x2: number, resolution: number): Float64Array;
    train_points(): Float64Array;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_boundary_points: (a: number) => [number, number];
    readonly demo_ci_grid: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_domain: () => [number, number];
    readonly demo_jitter: (a: number) => number;
    readonly demo_new: (a: number, b: number, c: number, d: bigint) => [number, number, number];
    readonly demo_similarity_grid: (a: number, b: number, c: number, d: number) => [number, number];
    readonly demo_train_points: (a: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
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
