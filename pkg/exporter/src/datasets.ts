import * as fs from "node:fs";
import * as path from "node:path";

import { checkCounts, writeDataset } from "./convert.js";
import { readNpz } from "./npz.js";
import { parseLinqs, parseNpzGraph, parsePubmed } from "./parsers.js";
import { readTar, tarEntry } from "./tar.js";
import { ExpectedCounts, ExportManifest, ParsedGraph, RetryableError } from "./types.js";

export interface DatasetSpec {
	name: string;
	url: string;
	archive: string; // cache file name
	expected: ExpectedCounts;
	parse(archive: Buffer): ParsedGraph;
}

export const DATASETS: Record<string, DatasetSpec> = {
	cora: {
		name: "cora",
		url: "https://linqs-data.soe.ucsc.edu/public/lbc/cora.tgz",
		archive: "cora.tgz",
		expected: { nodes: 2708, sourceLinks: 5429, features: 1433, classes: 7, edgeTolerance: 0.01 },
		parse(archive) {
			const entries = readTar(archive);
			return parseLinqs(
				tarEntry(entries, "cora.content").toString("utf8"),
				tarEntry(entries, "cora.cites").toString("utf8"),
			);
		},
	},
	citeseer: {
		name: "citeseer",
		url: "https://linqs-data.soe.ucsc.edu/public/lbc/citeseer.tgz",
		archive: "citeseer.tgz",
		expected: { nodes: 3327, sourceLinks: 4732, features: 3703, classes: 6, edgeTolerance: 0.01 },
		parse(archive) {
			const entries = readTar(archive);
			return parseLinqs(
				tarEntry(entries, "citeseer.content").toString("utf8"),
				tarEntry(entries, "citeseer.cites").toString("utf8"),
			);
		},
	},
	pubmed: {
		name: "pubmed",
		url: "https://linqs-data.soe.ucsc.edu/public/Pubmed-Diabetes.tgz",
		archive: "Pubmed-Diabetes.tgz",
		expected: { nodes: 19717, sourceLinks: 44338, features: 500, classes: 3, edgeTolerance: 0.01 },
		parse(archive) {
			const entries = readTar(archive);
			return parsePubmed(
				tarEntry(entries, "Pubmed-Diabetes.NODE.paper.tab").toString("utf8"),
				tarEntry(entries, "Pubmed-Diabetes.DIRECTED.cites.tab").toString("utf8"),
			);
		},
	},
	amazon_computers: {
		name: "amazon_computers",
		url: "https://github.com/shchur/gnn-benchmark/raw/master/data/npz/amazon_electronics_computers.npz",
		archive: "amazon_electronics_computers.npz",
		// adjacency is stored symmetric: links/2 undirected edges
		expected: { nodes: 13752, sourceLinks: 245861, features: 767, classes: 10, edgeTolerance: 0.01 },
		parse(archive) {
			return parseNpzGraph(readNpz(archive));
		},
	},
};

const RETRIES = 3;

async function download(url: string): Promise<Buffer> {
	let lastError: unknown;
	for (let attempt = 1; attempt <= RETRIES; attempt++) {
		try {
			const response = await fetch(url, { redirect: "follow" });
			if (!response.ok) {
				throw new Error(`HTTP ${response.status} for ${url}`);
			}
			return Buffer.from(await response.arrayBuffer());
		} catch (err) {
			lastError = err;
			await new Promise((r) => setTimeout(r, 1000 * attempt));
		}
	}
	throw new RetryableError(`download failed after ${RETRIES} attempts: ${url} (${lastError})`);
}

async function fetchArchive(spec: DatasetSpec, cacheDir?: string): Promise<Buffer> {
	if (cacheDir) {
		const cached = path.join(cacheDir, spec.archive);
		if (fs.existsSync(cached)) {
			return fs.readFileSync(cached);
		}
	}
	const data = await download(spec.url);
	if (cacheDir) {
		fs.mkdirSync(cacheDir, { recursive: true });
		fs.writeFileSync(path.join(cacheDir, spec.archive), data);
	}
	return data;
}

export async function exportDataset(
	name: string,
	outDir: string,
	options: { cacheDir?: string; datasets?: Record<string, DatasetSpec> } = {},
): Promise<ExportManifest> {
	const table = options.datasets ?? DATASETS;
	const spec = table[name];
	if (!spec) {
		throw new Error(`unknown dataset ${name}; expected one of ${Object.keys(table).join(", ")}`);
	}
	const archive = await fetchArchive(spec, options.cacheDir);
	const parsed = spec.parse(archive);
	checkCounts(spec.name, parsed, spec.expected);
	return writeDataset(spec.name, spec.url, parsed, outDir);
}
