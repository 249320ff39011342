import { createHash } from "node:crypto";
import * as fs from "node:fs";
import * as path from "node:path";

import {
	CountMismatchError,
	ExpectedCounts,
	ExportManifest,
	FormatError,
	ParsedGraph,
} from "./types.js";

export const OUTPUT_FILES = ["meta.json", "features.bin", "edges.bin", "labels.bin"] as const;

/** Canonical undirected edge list: (min,max) pairs, deduplicated, self-loops
 * dropped, sorted; one stored direction per edge. */
export function canonicalEdges(links: Array<[number, number]>): Array<[number, number]> {
	const seen = new Set<number>();
	const edges: Array<[number, number]> = [];
	for (const [a, b] of links) {
		if (a === b) continue;
		const u = Math.min(a, b);
		const v = Math.max(a, b);
		const key = u * 2 ** 26 + v; // node counts here are far below 2^26
		if (seen.has(key)) continue;
		seen.add(key);
		edges.push([u, v]);
	}
	edges.sort((x, y) => x[0] - y[0] || x[1] - y[1]);
	return edges;
}

export function checkCounts(name: string, parsed: ParsedGraph, expected: ExpectedCounts): void {
	const problems: string[] = [];
	if (parsed.numNodes !== expected.nodes) {
		problems.push(`nodes: expected ${expected.nodes}, got ${parsed.numNodes}`);
	}
	if (parsed.numFeatures !== expected.features) {
		problems.push(`features: expected ${expected.features}, got ${parsed.numFeatures}`);
	}
	if (parsed.numClasses !== expected.classes) {
		problems.push(`classes: expected ${expected.classes}, got ${parsed.numClasses}`);
	}
	const tolerance = expected.edgeTolerance * expected.sourceLinks;
	if (Math.abs(parsed.sourceLinks - expected.sourceLinks) > tolerance) {
		problems.push(
			`edges: expected ${expected.sourceLinks} source links (±${expected.edgeTolerance * 100}%), got ${parsed.sourceLinks}`,
		);
	}
	if (problems.length) {
		throw new CountMismatchError(`${name}: ${problems.join("; ")}`);
	}
}

function sha256(buf: Buffer): string {
	return createHash("sha256").update(buf).digest("hex");
}

/** Write the four binary files plus manifest.json; returns the manifest. */
export function writeDataset(
	name: string,
	source: string,
	parsed: ParsedGraph,
	outDir: string,
): ExportManifest {
	if (parsed.labels.length !== parsed.numNodes) {
		throw new FormatError(`${parsed.labels.length} labels for ${parsed.numNodes} nodes`);
	}
	const edges = canonicalEdges(parsed.links);
	fs.mkdirSync(outDir, { recursive: true });

	const meta = {
		name,
		num_nodes: parsed.numNodes,
		num_edges: edges.length,
		num_features: parsed.numFeatures,
		num_classes: parsed.numClasses,
	};
	const metaBuf = Buffer.from(JSON.stringify(meta, null, 2) + "\n", "utf8");

	const featBuf = Buffer.alloc(parsed.features.length * 4);
	for (let i = 0; i < parsed.features.length; i++) {
		featBuf.writeFloatLE(parsed.features[i], i * 4);
	}
	const edgeBuf = Buffer.alloc(edges.length * 8);
	for (let i = 0; i < edges.length; i++) {
		edgeBuf.writeUInt32LE(edges[i][0], i * 8);
		edgeBuf.writeUInt32LE(edges[i][1], i * 8 + 4);
	}
	const labelBuf = Buffer.alloc(parsed.numNodes * 4);
	for (let i = 0; i < parsed.numNodes; i++) {
		labelBuf.writeUInt32LE(parsed.labels[i], i * 4);
	}

	const blobs: Record<string, Buffer> = {
		"meta.json": metaBuf,
		"features.bin": featBuf,
		"edges.bin": edgeBuf,
		"labels.bin": labelBuf,
	};
	const checksums: Record<string, string> = {};
	for (const [file, blob] of Object.entries(blobs)) {
		fs.writeFileSync(path.join(outDir, file), blob);
		checksums[file] = sha256(blob);
	}
	const manifest: ExportManifest = {
		...meta,
		source,
		source_link_count: parsed.sourceLinks,
		dropped_links: parsed.droppedLinks,
		checksums,
	};
	fs.writeFileSync(
		path.join(outDir, "manifest.json"),
		Buffer.from(JSON.stringify(manifest, null, 2) + "\n", "utf8"),
	);
	return manifest;
}

export interface VerifyResult {
	ok: boolean;
	problems: string[];
}

/** Re-read an exported directory and check sizes, ranges, canonical edges,
 * and manifest checksums. */
export function verifyExport(dir: string): VerifyResult {
	const problems: string[] = [];
	const readOr = (file: string): Buffer | null => {
		const p = path.join(dir, file);
		if (!fs.existsSync(p)) {
			problems.push(`missing ${file}`);
			return null;
		}
		return fs.readFileSync(p);
	};
	const metaBuf = readOr("meta.json");
	const manifestBuf = readOr("manifest.json");
	if (!metaBuf || !manifestBuf) return { ok: false, problems };
	const meta = JSON.parse(metaBuf.toString("utf8"));
	const manifest = JSON.parse(manifestBuf.toString("utf8")) as ExportManifest;

	const expectSize: Record<string, number> = {
		"features.bin": 4 * meta.num_nodes * meta.num_features,
		"edges.bin": 8 * meta.num_edges,
		"labels.bin": 4 * meta.num_nodes,
	};
	const blobs: Record<string, Buffer> = { "meta.json": metaBuf };
	for (const [file, size] of Object.entries(expectSize)) {
		const buf = readOr(file);
		if (!buf) continue;
		if (buf.length !== size) {
			problems.push(`${file}: size ${buf.length}, expected ${size}`);
		}
		blobs[file] = buf;
	}
	for (const [file, blob] of Object.entries(blobs)) {
		const expected = manifest.checksums?.[file];
		if (expected && sha256(blob) !== expected) {
			problems.push(`${file}: checksum mismatch`);
		}
	}

	const labels = blobs["labels.bin"];
	if (labels && labels.length === 4 * meta.num_nodes) {
		for (let i = 0; i < meta.num_nodes; i++) {
			const label = labels.readUInt32LE(i * 4);
			if (label >= meta.num_classes) {
				problems.push(`labels.bin: label ${label} at node ${i} >= ${meta.num_classes}`);
				break;
			}
		}
	}
	const edges = blobs["edges.bin"];
	if (edges && edges.length === 8 * meta.num_edges) {
		let prevU = -1;
		let prevV = -1;
		for (let i = 0; i < meta.num_edges; i++) {
			const u = edges.readUInt32LE(i * 8);
			const v = edges.readUInt32LE(i * 8 + 4);
			if (u >= v) {
				problems.push(`edges.bin: pair ${i} (${u}, ${v}) is not (min, max) or is a self-loop`);
				break;
			}
			if (v >= meta.num_nodes) {
				problems.push(`edges.bin: endpoint ${v} >= ${meta.num_nodes}`);
				break;
			}
			if (u < prevU || (u === prevU && v <= prevV)) {
				problems.push(`edges.bin: pair ${i} breaks canonical order (duplicate or unsorted)`);
				break;
			}
			prevU = u;
			prevV = v;
		}
	}
	return { ok: problems.length === 0, problems };
}
