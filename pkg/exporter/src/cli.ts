#!/usr/bin/env node
/**
 * fedlisting-export <cora|citeseer|pubmed|amazon_computers> --out <dir> [--cache <dir>]
 * fedlisting-export verify <dir>
 *
 * Downloads a public graph benchmark (or reads it from the cache directory)
 * and converts it to the fedlisting binary dataset format, writing
 * meta.json / features.bin / edges.bin / labels.bin plus manifest.json with
 * per-file sha256 checksums.
 *
 * Exit codes: 0 ok, 1 hard error (count mismatch, bad archive), 2 usage,
 * 3 retryable download failure.
 */

import { verifyExport } from "./convert.js";
import { DATASETS, exportDataset } from "./datasets.js";
import { CountMismatchError, FormatError, RetryableError } from "./types.js";

function usage(): never {
	console.error(
		"usage: fedlisting-export <" +
			Object.keys(DATASETS).join("|") +
			"> --out <dir> [--cache <dir>]\n" +
			"       fedlisting-export verify <dir>",
	);
	process.exit(2);
}

async function main(argv: string[]): Promise<number> {
	if (argv.length === 0) usage();
	if (argv[0] === "verify") {
		if (argv.length !== 2) usage();
		const result = verifyExport(argv[1]);
		if (result.ok) {
			console.log(`ok: ${argv[1]}`);
			return 0;
		}
		for (const problem of result.problems) console.error(`problem: ${problem}`);
		return 1;
	}

	const name = argv[0];
	let out: string | undefined;
	let cache: string | undefined;
	for (let i = 1; i < argv.length; i++) {
		if (argv[i] === "--out") out = argv[++i];
		else if (argv[i] === "--cache") cache = argv[++i];
		else usage();
	}
	if (!out || !(name in DATASETS)) usage();

	try {
		const manifest = await exportDataset(name, out, { cacheDir: cache });
		console.log(
			`${manifest.name}: ${manifest.num_nodes} nodes, ${manifest.num_edges} stored edges ` +
				`(${manifest.source_link_count} source links, ${manifest.dropped_links} dropped), ` +
				`${manifest.num_features} features, ${manifest.num_classes} classes -> ${out}`,
		);
		return 0;
	} catch (err) {
		if (err instanceof RetryableError) {
			console.error(`download failed (retry later or pass --cache): ${err.message}`);
			return 3;
		}
		if (err instanceof CountMismatchError || err instanceof FormatError) {
			console.error(`error: ${err.message}`);
			return 1;
		}
		throw err;
	}
}

main(process.argv.slice(2)).then(
	(code) => process.exit(code),
	(err) => {
		console.error(err);
		process.exit(1);
	},
);
