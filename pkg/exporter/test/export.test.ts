import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { afterEach, beforeEach, describe, expect, it } from "vitest";

import { canonicalEdges, checkCounts, verifyExport, writeDataset } from "../src/convert.js";
import { exportDataset, DatasetSpec } from "../src/datasets.js";
import { parseLinqs } from "../src/parsers.js";
import { readTar, tarEntry } from "../src/tar.js";
import { CountMismatchError, RetryableError } from "../src/types.js";
import { buildTgz, tinyLinqs } from "./fixtures.js";

let dir: string;
beforeEach(() => {
	dir = fs.mkdtempSync(path.join(os.tmpdir(), "fedlisting-export-"));
});
afterEach(() => {
	fs.rmSync(dir, { recursive: true, force: true });
});

function tinyParsed() {
	const { content, cites } = tinyLinqs();
	return parseLinqs(content, cites);
}

const TINY_EXPECTED = { nodes: 6, sourceLinks: 6, features: 4, classes: 2, edgeTolerance: 0.01 };

describe("canonicalEdges", () => {
	it("dedupes, drops self-loops, symmetrizes to (min,max), sorts", () => {
		expect(canonicalEdges([[3, 1], [1, 3], [2, 2], [0, 1], [1, 3]]))
			.toEqual([[0, 1], [1, 3]]);
	});
});

describe("checkCounts", () => {
	it("accepts matching counts and edge counts within tolerance", () => {
		expect(() => checkCounts("tiny", tinyParsed(), TINY_EXPECTED)).not.toThrow();
		const loose = { ...TINY_EXPECTED, sourceLinks: 100, edgeTolerance: 10 };
		expect(() => checkCounts("tiny", tinyParsed(), loose)).not.toThrow();
	});

	it("rejects each mismatch with expected vs actual", () => {
		for (const patch of [
			{ nodes: 7 }, { features: 5 }, { classes: 3 }, { sourceLinks: 20 },
		]) {
			const expected = { ...TINY_EXPECTED, ...patch };
			expect(() => checkCounts("tiny", tinyParsed(), expected))
				.toThrow(CountMismatchError);
		}
		try {
			checkCounts("tiny", tinyParsed(), { ...TINY_EXPECTED, nodes: 7 });
		} catch (err) {
			expect(String(err)).toContain("expected 7");
			expect(String(err)).toContain("got 6");
		}
	});
});

describe("writeDataset / verifyExport", () => {
	it("writes predictable sizes and a checksum manifest", () => {
		const manifest = writeDataset("tiny", "fixture://tiny", tinyParsed(), dir);
		expect(manifest.num_nodes).toBe(6);
		expect(manifest.num_edges).toBe(2); // 6 links -> dedup/self-loop/dangling
		expect(manifest.source_link_count).toBe(6);
		expect(manifest.dropped_links).toBe(1);
		const meta = JSON.parse(fs.readFileSync(path.join(dir, "meta.json"), "utf8"));
		expect(fs.statSync(path.join(dir, "features.bin")).size).toBe(4 * 6 * 4);
		expect(fs.statSync(path.join(dir, "edges.bin")).size).toBe(8 * meta.num_edges);
		expect(fs.statSync(path.join(dir, "labels.bin")).size).toBe(4 * 6);
		expect(verifyExport(dir).ok).toBe(true);
	});

	it("flags truncation with a size diagnostic", () => {
		writeDataset("tiny", "fixture://tiny", tinyParsed(), dir);
		const featPath = path.join(dir, "features.bin");
		fs.writeFileSync(featPath, fs.readFileSync(featPath).subarray(0, 10));
		const result = verifyExport(dir);
		expect(result.ok).toBe(false);
		expect(result.problems.join(" ")).toMatch(/features.bin: size 10/);
	});

	it("flags an out-of-range label edit", () => {
		writeDataset("tiny", "fixture://tiny", tinyParsed(), dir);
		const labelPath = path.join(dir, "labels.bin");
		const labels = fs.readFileSync(labelPath);
		labels.writeUInt32LE(2, 0); // num_classes is 2
		fs.writeFileSync(labelPath, labels);
		const result = verifyExport(dir);
		expect(result.ok).toBe(false);
		expect(result.problems.join(" ")).toMatch(/label 2/);
		expect(result.problems.join(" ")).toMatch(/checksum/);
	});
});

describe("exportDataset", () => {
	const table: Record<string, DatasetSpec> = {
		tiny: {
			name: "tiny",
			url: "https://nowhere.invalid/tiny.tgz",
			archive: "tiny.tgz",
			expected: TINY_EXPECTED,
			parse(archive) {
				const entries = readTar(archive);
				return parseLinqs(
					tarEntry(entries, "tiny.content").toString("utf8"),
					tarEntry(entries, "tiny.cites").toString("utf8"),
				);
			},
		},
	};

	function warmCache(): string {
		const cacheDir = path.join(dir, "cache");
		fs.mkdirSync(cacheDir, { recursive: true });
		const { content, cites } = tinyLinqs();
		fs.writeFileSync(
			path.join(cacheDir, "tiny.tgz"),
			buildTgz({ "tiny/tiny.content": content, "tiny/tiny.cites": cites }),
		);
		return cacheDir;
	}

	it("exports offline from a warm cache, idempotently", async () => {
		const cacheDir = warmCache();
		const out1 = path.join(dir, "out1");
		const out2 = path.join(dir, "out2");
		const m1 = await exportDataset("tiny", out1, { cacheDir, datasets: table });
		const m2 = await exportDataset("tiny", out2, { cacheDir, datasets: table });
		expect(m1.checksums).toEqual(m2.checksums);
		expect(verifyExport(out1).ok).toBe(true);
	});

	it("rejects unknown names", async () => {
		await expect(exportDataset("nope", dir, { datasets: table }))
			.rejects.toThrow(/unknown dataset/);
	});

	it("surfaces download failures as retryable", async () => {
		await expect(exportDataset("tiny", path.join(dir, "out"), { datasets: table }))
			.rejects.toThrow(RetryableError);
	}, 30_000);
});
