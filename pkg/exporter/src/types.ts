/** Parsed dataset in memory, before conversion to the binary format. */
export interface ParsedGraph {
	/** Dense row-major float32 node features, numNodes x numFeatures. */
	features: Float32Array;
	numNodes: number;
	numFeatures: number;
	/** Class index per node, in [0, numClasses). */
	labels: Uint32Array;
	numClasses: number;
	/** Raw link list as (u, v) node-index pairs, possibly with duplicates,
	 * reciprocals, and self-loops. */
	links: Array<[number, number]>;
	/** Links in the source that referenced unknown node ids (dropped). */
	droppedLinks: number;
	/** The edge count the upstream distribution reports (what Table-style
	 * summaries cite): raw link lines for citation sets, nnz/2 for a stored
	 * symmetric adjacency. */
	sourceLinks: number;
}

/** Expected per-dataset counts; edges compares against the source link count. */
export interface ExpectedCounts {
	nodes: number;
	sourceLinks: number;
	features: number;
	classes: number;
	/** Relative tolerance on the source link count. */
	edgeTolerance: number;
}

export interface ExportManifest {
	name: string;
	source: string;
	num_nodes: number;
	/** Stored undirected edge pairs after dedup/symmetrization. */
	num_edges: number;
	num_features: number;
	num_classes: number;
	/** Links in the upstream distribution (what the literature reports). */
	source_link_count: number;
	dropped_links: number;
	checksums: Record<string, string>;
}

/** Download failed; retrying later (or supplying --cache) may succeed. */
export class RetryableError extends Error {}

/** Converted output contradicts the expected dataset shape. */
export class CountMismatchError extends Error {}

export class FormatError extends Error {}
