/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Learned reward of every frame of the current episode.
     */
    episode_rewards(): Float64Array;
    /**
     * Ground-truth reward of every frame of the current episode.
     */
    episode_truth(): Float64Array;
    /**
     * Reward over a `resolution`² grid of positions for the pushed object
     * (push) or the agent (reach), other bodies as at the episode start.
     * Row-major, row 0 at y = 0. Learned reward when `learned`, else truth.
     */
    heatmap(resolution: number, learned: boolean): Float64Array;
    constructor(task: string);
    /**
     * Expert episode from `seed`, flattened as
     * `[ax, ay, ox, oy, gx, gy, r_agent, r_object, r_goal]` per frame.
     */
    rollout(seed: bigint): Float64Array;
    /**
     * Trains a small encoder on fresh expert demos; returns a one-line summary.
     */
    train(demos: number, iterations: number, seed: bigint): string;
    readonly stride: number;
    readonly success: boolean;
    readonly task: string;
    readonly trained: boolean;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_episode_rewards: (a: number) => [number, number, number, number];
    readonly demo_episode_truth: (a: number) => [number, number];
    readonly demo_heatmap: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_new: (a: number, b: number) => [number, number, number];
    readonly demo_rollout: (a: number, b: bigint) => [number, number];
    readonly demo_stride: (a: number) => number;
    readonly demo_success: (a: number) => number;
    readonly demo_task: (a: number) => [number, number];
    readonly demo_train: (a: number, b: number, c: number, d: bigint) => [number, number, number, number];
    readonly demo_trained: (a: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
